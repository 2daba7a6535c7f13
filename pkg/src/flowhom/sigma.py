"""Weak pairings along flows, oscillatory-integral decay and convergence studies."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import CoverageError, FlowhomError, ResolutionError, UnboundedJacobianError
from .flows import jacobian_bound_estimate
from .meanvalue import TemporalSignal, mean_value, piecewise_dyadic_average

__all__ = [
    "TestFunction",
    "PairingResult",
    "DecayTable",
    "StudyReport",
    "sigma_pairing",
    "predicted_limit",
    "oscillatory_decay_check",
    "fit_order",
    "convergence_study",
    "nonuniqueness_study",
    "wendland_bump",
]


@dataclass(frozen=True)
class TestFunction:
    """Separable test function ``g(t) h(X) f(tau) cos(2 pi n . y)``.

    ``h`` maps points ``(d, ...)`` to values; ``support`` is the box
    ``(lower, upper)`` outside which ``h`` vanishes (``None`` for periodic
    ``h`` on a torus box).
    """

    __test__ = False  # not a pytest class

    g: Callable
    h: Callable
    f: TemporalSignal
    n: tuple
    support: Optional[tuple] = None
    name: str = "psi"

    @property
    def tau_class(self):
        return self.f.kind

    @property
    def y_modes(self):
        return (tuple(self.n),)

    def __call__(self, t, X, tau, y):
        n = np.asarray(self.n, dtype=float).reshape((-1,) + (1,) * (np.ndim(y) - 1))
        phase = 2 * np.pi * np.sum(n * y, axis=0)
        ft = np.asarray(self.f(np.atleast_1d(tau)), dtype=float).reshape(())
        return self.g(t) * self.h(X) * ft * np.cos(phase)


@dataclass
class PairingResult:
    epsilon: float
    value: float
    predicted_limit: float

    @property
    def gap(self):
        return abs(self.value - self.predicted_limit)


def _wrap_into(box, X):
    lo = np.asarray(box.lower).reshape((-1,) + (1,) * (X.ndim - 1))
    L = (np.asarray(box.upper) - np.asarray(box.lower)).reshape(lo.shape)
    return lo + np.mod(X - lo, L)


def _check_support(psi, field, box, times, eps):
    if psi.support is None or box.wrap:
        return
    lo, hi = (np.asarray(v, dtype=float) for v in psi.support)
    # sample a 5-point-per-axis lattice over the support
    grids = np.meshgrid(*[np.linspace(l, u, 5) for l, u in zip(lo, hi)], indexing="ij")
    pts = np.stack([g.ravel() for g in grids])
    blo, bhi = np.asarray(box.lower)[:, None], np.asarray(box.upper)[:, None]
    for t in times:
        x = field.flow_map(pts, np.full(pts.shape[1], t / eps))
        if np.any(x < blo) or np.any(x > bhi):
            raise CoverageError(f"test-function support leaves the solution box at t = {t:g}")


def sigma_pairing(sol, psi, field, epsilon=None):
    """``int int u(t, x) psi(t, Phi_{-t/eps}(x), t/eps, x/eps) dx dt`` by quadrature.

    Space: cell-centre rule on the solution grid. Time: trapezoid over the
    stored frames. On a torus box the Lagrangian point is wrapped back into
    the box.
    """
    eps = sol.epsilon if epsilon is None else epsilon
    box = sol.box
    if any(psi.n) and float(np.max(box.spacing)) * float(np.max(np.abs(psi.n))) > eps / 4:
        raise ResolutionError("grid resolves fewer than 4 points per fast oscillation of the test function")
    _check_support(psi, field, box, sol.times, eps)
    x = box.centers()
    flat = x.reshape(box.dimension, -1)
    y = x / eps
    vals = []
    for t, u in zip(sol.times, sol.frames):
        tau = t / eps
        X = flat if tau == 0 else field.flow_map(flat, np.full(flat.shape[1], -tau))
        X = X.reshape(x.shape)
        if box.wrap:
            X = _wrap_into(box, X)
        vals.append(float(np.sum(u * psi(t, X, tau, y)) * box.cell_volume))
    if len(vals) == 1:
        return vals[0]
    return float(np.trapezoid(vals, sol.times))


def predicted_limit(u0, psi, mean_data=None):
    """``int int u0(t, X) M_tau[y-mean of psi(t, X, tau, .)] dX dt``.

    For the separable battery the inner mean is ``g(t) h(X) M(f)`` when
    ``n = 0`` and vanishes otherwise. ``mean_data`` is a precomputed
    estimate of ``M(f)``.
    """
    if any(psi.n):
        return 0.0
    est = mean_data if mean_data is not None else mean_value(psi.f)
    if not est.converged:
        from .errors import NonConvergentMeanError
        raise NonConvergentMeanError("mean of the fast-time factor did not converge")
    mf = float(np.asarray(est.value))
    X = u0.box.centers()
    hx = psi.h(X)
    vals = [float(np.sum(u * hx) * u0.box.cell_volume) * psi.g(t) * mf for t, u in zip(u0.times, u0.frames)]
    if len(vals) == 1:
        return vals[0]
    return float(np.trapezoid(vals, u0.times))


def wendland_bump(center, radius):
    """Compactly supported C^2 radial bump ``(1 - r)^4 (4 r + 1)``.

    Its Fourier transform is strictly positive with algebraic decay, so
    oscillatory integrals against it decay at a clean algebraic rate.
    """
    c = np.asarray(center, dtype=float)

    def h(X):
        r = np.sqrt(sum((X[a] - c[a]) ** 2 for a in range(c.size))) / radius
        return np.where(r < 1, (1 - r) ** 4 * (4 * r + 1), 0.0)

    support = (tuple(c - radius), tuple(c + radius))
    return h, support


@dataclass
class DecayTable:
    epsilon: np.ndarray
    values: np.ndarray
    order: float
    passed: bool


def fit_order(eps, values, last=3):
    """Least-squares slope of ``log values`` against ``log eps`` on the last points."""
    e = np.asarray(eps, dtype=float)[-last:]
    v = np.asarray(values, dtype=float)[-last:]
    if np.any(v <= 0):
        return float("nan")
    return float(np.polyfit(np.log(e), np.log(v), 1)[0])


def oscillatory_decay_check(h, field, n, eps_list, support, t=1.0, points_per_period=16, min_order=0.9,
                            check_jacobian=True):
    """``|int h(Phi_{-t/eps}(x)) exp(2 pi i n . x / eps) dx|`` for each ``eps``.

    The integral is evaluated in Lagrangian variables (volume preserving
    change of variables), ``int h(X) exp(2 pi i n . Phi_{t/eps}(X) / eps) dX``,
    by the midpoint rule on the support box with ``points_per_period`` nodes
    per oscillation period.
    """
    n = np.asarray(n, dtype=float)
    if not np.any(n):
        raise ValueError("oscillation wavevector n must be nonzero")
    lo, hi = (np.asarray(v, dtype=float) for v in support)
    if check_jacobian:
        jb = jacobian_bound_estimate(field, (lo, hi), max(t / min(eps_list), 10.0), 4, tol=1e-9)
        if jb.growth:
            raise UnboundedJacobianError("flow Jacobian grows; the decay bound does not apply")
    values = []
    for eps in eps_list:
        step = eps / (points_per_period * max(1.0, float(np.max(np.abs(n)))))
        m = [int(math.ceil((u - l) / step)) for l, u in zip(lo, hi)]
        axes = [l + (np.arange(k) + 0.5) * (u - l) / k for l, u, k in zip(lo, hi, m)]
        X = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(lo.size, -1)
        w = float(np.prod([(u - l) / k for l, u, k in zip(lo, hi, m)]))
        hv = h(X)
        keep = hv != 0
        x = field.flow_map(X[:, keep], np.full(int(keep.sum()), t / eps))
        phase = 2 * np.pi * (n @ x) / eps
        values.append(abs(np.sum(hv[keep] * np.exp(1j * phase)) * w))
    order = fit_order(eps_list, values)
    return DecayTable(np.asarray(eps_list, dtype=float), np.array(values), order, bool(order >= min_order))


@dataclass
class StudyReport:
    """Per-epsilon errors, pairing gaps and the fitted order."""

    scenario: str
    verdict: str
    epsilon: list
    errors: list
    norm: str
    order: float
    pairing_gaps: dict = dc_field(default_factory=dict)
    failures: dict = dc_field(default_factory=dict)
    extra: dict = dc_field(default_factory=dict)

    @property
    def strictly_decreasing(self):
        e = [v for v in self.errors if v is not None]
        return len(e) == len(self.errors) and all(a > b for a, b in zip(e, e[1:]))

    def rows(self):
        return [(self.scenario, eps, self.norm, err, self.order) for eps, err in zip(self.epsilon, self.errors)]


def _map(func, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(i) for i in items]


def convergence_study(scenario, eps_list=None, threads=1, battery=True):
    """Run the epsilon sweep of a scenario and compare with its limit.

    For homogenizing scenarios the error is ``||v_eps - u0||`` in
    ``L2((0,T) x box)`` where ``v_eps`` is the remapped solution. Otherwise
    the solution norm at ``T`` is reported, together with the late-time norm
    of ``d_{X1} v_eps``.
    Sub-run failures are recorded per epsilon and the study continues.
    """
    from .pde import lagrangian_remap, solve_eps, solve_homogenized, space_time_l2

    eps_list = list(eps_list or scenario.sweep.eps)
    if len(eps_list) < 3:
        raise ValueError("a convergence study needs at least three epsilon values")
    eps_list = sorted(eps_list, reverse=True)
    verdict = scenario.diagnose().verdict
    n_frames = scenario.study_frames(min(eps_list))

    def run(eps):
        try:
            spec = scenario.eps_problem(eps, n_frames=n_frames)
            sol = solve_eps(spec)
            return eps, sol, lagrangian_remap(sol, scenario.field, eps, warn=False), None
        except FlowhomError as exc:
            return eps, None, None, f"{type(exc).__name__}: {exc}"

    runs = _map(run, eps_list, threads)
    failures = {eps: msg for eps, _, _, msg in runs if msg}
    errors, gaps, extra = [], {}, {"mass_drift": [], "l2_increase": [], "grad_x1": []}
    if verdict == "homogenizes":
        cache = {}
        for eps, sol, v, msg in runs:
            if msg:
                errors.append(None)
                continue
            key = sol.box
            if key not in cache:
                cache[key] = solve_homogenized(scenario.hom_problem(sol.box, n_frames=n_frames))
            u0 = cache[key]
            errors.append(space_time_l2(v, u0))
            extra["mass_drift"].append(sol.mass_drift())
            extra["l2_increase"].append(sol.max_l2_increase())
            if battery:
                for psi in scenario.battery():
                    try:
                        val = sigma_pairing(sol, psi, scenario.field, eps)
                        gap = abs(val - predicted_limit(u0, psi))
                    except (ResolutionError, CoverageError):
                        gap = None
                    gaps.setdefault(psi.name, []).append(gap)
        norm = "L2(0,T;L2)"
    else:
        for eps, sol, v, msg in runs:
            if msg:
                errors.append(None)
                continue
            errors.append(float(sol.l2_trace[-1]))
            extra["grad_x1"].append(_late_gradient_norm(v, 0.2 * v.times[-1]))
            extra["mass_drift"].append(sol.mass_drift())
            extra["l2_increase"].append(sol.max_l2_increase())
        norm = "L2 at T"
    valid = [(e, err) for e, err in zip(eps_list, errors) if err is not None and err > 0]
    order = fit_order([e for e, _ in valid], [err for _, err in valid]) if len(valid) >= 2 else float("nan")
    return StudyReport(scenario.name, verdict, eps_list, errors, norm, order, gaps, failures, extra)


def _late_gradient_norm(v, t0):
    """``||d_{X1} v||`` in ``L2((t0, T) x box)`` with central differences."""
    keep = v.times >= t0
    sq = [np.sum(np.gradient(f, v.box.spacing[0], axis=0) ** 2) * v.box.cell_volume
          for f, k in zip(v.frames, keep) if k]
    return float(np.sqrt(np.trapezoid(sq, v.times[keep]))) if len(sq) > 1 else float(np.sqrt(sq[0]))


def nonuniqueness_study(exponents=(9, 4), spacing=0.1, lower=-20.0, upper=540.0, T=1.0, variance=1.0,
                        max_steps=200000):
    """Two-branch experiment for the dyadic coefficient with unit drift.

    For each ``eps = 2^-k`` the one-dimensional oscillating problem is solved,
    remapped to Lagrangian coordinates and compared at ``T`` with the heat
    solutions of coefficient 1 and 2. The branch predicted by the window
    averages is the one whose window length ``1/eps`` makes the dyadic average
    closest.
    """
    from .flows import constant_drift
    from .meanvalue import dyadic_coefficient
    from .pde import Box, EpsProblemSpec, HomProblemSpec, gaussian, lagrangian_remap, solve_eps, \
        solve_homogenized

    field = constant_drift([1.0])
    box = Box.from_spacing((lower,), (upper,), spacing, wrap=False)
    u_in = gaussian([0.0], variance)
    heat = {c: solve_homogenized(HomProblemSpec(np.array([[c]]), u_in, box, T, n_frames=2)).frames[-1]
            for c in (1.0, 2.0)}
    branches = []
    for k in exponents:
        eps = 2.0 ** -k
        steps = T / (0.25 * eps * spacing)
        record = {"exponent": k, "epsilon": eps, "fallback": None}
        kk = k
        while steps > max_steps and kk > 5:
            kk -= 2
            eps = 2.0 ** -kk
            steps = T / (0.25 * eps * spacing)
            record["fallback"] = f"reduced to 2^-{kk}"
        # window of fast time covered: [0, T/eps]; its dyadic average over
        # the symmetric window [-l, l] with l = T/eps
        avg = float(piecewise_dyadic_average(int(round(T / eps))))
        predicted = 1.0 if abs(avg - 1) < abs(avg - 2) else 2.0
        spec = EpsProblemSpec(eps, lambda x, y: np.ones_like(x),
                              lambda x, y: dyadic_coefficient(x[0])[None, None], u_in, box, T, n_frames=2)
        sol = solve_eps(spec)
        v = lagrangian_remap(sol, field, eps, warn=False).frames[-1]
        dist = {c: float(np.sqrt(np.sum((v - w) ** 2) * box.cell_volume)) for c, w in heat.items()}
        closer = min(dist, key=dist.get)
        record.update(epsilon=eps, distance_to_1=dist[1.0], distance_to_2=dist[2.0], closer=closer,
                      predicted=predicted, window_average=avg, agrees=closer == predicted,
                      mass_drift=sol.mass_drift(), l2_increase=sol.max_l2_increase())
        branches.append(record)
    return {
        "branches": branches,
        "window_averages": {"16": piecewise_dyadic_average(16), "2": piecewise_dyadic_average(2)},
        "passed": all(b["agrees"] for b in branches),
    }
