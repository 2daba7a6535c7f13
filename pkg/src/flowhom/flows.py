"""Mean-field flows, backward-flow Jacobians and flow representations.

Points are arrays of shape ``(d,)`` or batches of shape ``(d, m)``. For a
mean field ``b_bar`` the flow ``Phi_tau`` solves ``X' = b_bar(X)`` and the
Jacobian convention is that of the *backward* flow,
``J(tau, x) = d Phi_{-tau} / dx``.
"""

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import IntegrationError

__all__ = [
    "MeanFlowField",
    "FlowSample",
    "JacobianBound",
    "integrate_flow",
    "jacobian",
    "flow_sample",
    "flow_representation",
    "transport_identity_residual",
    "jacobian_bound_estimate",
    "classify_orbit",
    "constant_drift",
    "linear_field",
    "rotation",
    "shear",
    "asymptotic_drift",
    "zero_field",
]


@dataclass(frozen=True)
class MeanFlowField:
    """Divergence-free mean velocity field with optional closed-form flow.

    ``b_bar(X)`` maps ``(d, ...)`` to ``(d, ...)`` and ``grad_b_bar(X)`` maps
    ``(d, ...)`` to ``(d, d, ...)`` with ``grad[i, j] = d b_i / d x_j``.
    ``exact_flow(X, tau)`` and ``exact_jacobian(x, tau)``, when present, are
    closed forms used by the heavy pipelines and by tests as oracles; the
    public :func:`integrate_flow` and :func:`jacobian` always integrate.
    """

    dimension: int
    b_bar: Callable
    grad_b_bar: Callable
    divergence_tolerance: float = 1e-10
    name: str = "field"
    exact_flow: Optional[Callable] = None
    exact_jacobian: Optional[Callable] = None
    sup_speed: Optional[Callable] = dc_field(default=None, compare=False)

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")

    def divergence(self, x):
        g = self.grad_b_bar(np.asarray(x, dtype=float))
        return sum(g[a, a] for a in range(self.dimension))

    def validate(self, box, samples=64, seed=0, fd_step=1e-4):
        """Check incompressibility and the analytic gradient on random points.

        Returns the largest divergence magnitude and the largest relative
        mismatch between ``grad_b_bar`` and a central difference.
        """
        lo, hi = (np.asarray(v, dtype=float) for v in box)
        rng = np.random.default_rng(seed)
        x = lo[:, None] + (hi - lo)[:, None] * rng.random((self.dimension, samples))
        div = float(np.max(np.abs(self.divergence(x))))
        g = self.grad_b_bar(x)
        err = 0.0
        for j in range(self.dimension):
            e = np.zeros((self.dimension, 1))
            e[j] = fd_step
            fd = (self.b_bar(x + e) - self.b_bar(x - e)) / (2 * fd_step)
            err = max(err, float(np.max(np.abs(fd - g[:, j]))))
        if div > self.divergence_tolerance:
            raise ValueError(f"mean field is not divergence free: {div:.3e}")
        return div, err

    def flow_map(self, x, tau, tol=1e-10):
        """``Phi_tau(x)``, closed form when available, else integrated."""
        x = np.asarray(x, dtype=float)
        if self.exact_flow is not None:
            return self.exact_flow(x, np.asarray(tau, dtype=float))
        return integrate_flow(self, x, tau, tol)

    def jacobian_map(self, x, tau, tol=1e-10):
        """``J(tau, x)``, closed form when available, else integrated."""
        x = np.asarray(x, dtype=float)
        if self.exact_jacobian is not None:
            return self.exact_jacobian(x, np.asarray(tau, dtype=float))
        return jacobian(self, x, tau, tol)


@dataclass(frozen=True)
class FlowSample:
    tau: float
    x: np.ndarray
    phi: np.ndarray
    jacobian: np.ndarray
    det_residual: float


def _as_batch(field, x, tau):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x.reshape(field.dimension, -1)
    t = np.broadcast_to(np.asarray(tau, dtype=float), (xb.shape[1],)).copy()
    return xb, t, single


def _solve(rhs, y0, tol, method):
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method=method, rtol=tol, atol=tol)
    if sol.status != 0:
        raise IntegrationError(f"flow integration failed: {sol.message}",
                               last_state=sol.y[:, -1] if sol.y.size else y0,
                               last_time=sol.t[-1] if sol.t.size else 0.0)
    return sol.y[:, -1]


def integrate_flow(field, x, tau, tol=1e-10, method="RK45"):
    """Integrate ``X' = b_bar(X)`` from ``x`` for time ``tau``.

    Batches share one adaptive integration in the rescaled time
    ``s in [0, 1]`` with right-hand side ``tau_i * b_bar``. ``tau = 0``
    returns an exact copy.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    xb, t, single = _as_batch(field, x, tau)
    d, m = xb.shape
    if not np.any(t):
        out = xb.copy()
    else:
        def rhs(_, y):
            return (field.b_bar(y.reshape(d, m)) * t).ravel()

        out = _solve(rhs, xb.ravel(), tol, method).reshape(d, m)
        out[:, t == 0] = xb[:, t == 0]
    return out[:, 0] if single else out


def _backward_with_jacobian(field, x, tau, tol, method):
    xb, t, single = _as_batch(field, x, tau)
    d, m = xb.shape
    eye = np.broadcast_to(np.eye(d)[:, :, None], (d, d, m))
    if not np.any(t):
        return xb.copy(), np.array(eye), single
    y0 = np.concatenate([xb.ravel(), eye.ravel()])

    def rhs(_, y):
        z = y[: d * m].reshape(d, m)
        M = y[d * m:].reshape(d, d, m)
        dz = -field.b_bar(z) * t
        G = field.grad_b_bar(z)
        dM = -np.einsum("ijm,jkm->ikm", G, M) * t
        return np.concatenate([dz.ravel(), dM.ravel()])

    y = _solve(rhs, y0, tol, method)
    return y[: d * m].reshape(d, m), y[d * m:].reshape(d, d, m), single


def jacobian(field, x, tau, tol=1e-10, method="RK45"):
    """Backward-flow Jacobian ``J(tau, x) = d Phi_{-tau}/dx``.

    Co-integrates ``M' = -grad b_bar(Phi_{-s} x) M`` with ``M(0) = I``.
    Batched input ``(d, m)`` returns ``(d, d, m)``.
    """
    _, M, single = _backward_with_jacobian(field, x, tau, tol, method)
    return M[:, :, 0] if single else M


def flow_sample(field, x, tau, tol=1e-10, method="RK45"):
    """Backward image, Jacobian and determinant residual at one point."""
    phi, M, _ = _backward_with_jacobian(field, x, tau, tol, method)
    J = M[:, :, 0]
    return FlowSample(float(tau), np.asarray(x, dtype=float), phi[:, 0], J,
                      float(abs(np.linalg.det(J) - 1.0)))


def flow_representation(f, field, tau, x, *args, tol=1e-10):
    """``f(Phi_tau(x), *args)``; extra arguments (e.g. ``y``) pass through."""
    x = np.asarray(x, dtype=float)
    if np.all(np.asarray(tau) == 0):
        return f(x, *args)
    return f(integrate_flow(field, x, tau, tol), *args)


def transport_identity_residual(field, x, tau, tol=1e-10, method="RK45"):
    """``|b_bar(Phi_{-tau} x) - J(tau, x) b_bar(x)|`` (max over a batch)."""
    phi, M, _ = _backward_with_jacobian(field, x, tau, tol, method)
    xb = np.asarray(x, dtype=float).reshape(field.dimension, -1)
    lhs = field.b_bar(phi)
    rhs = np.einsum("ijm,jm->im", M, field.b_bar(xb))
    return float(np.max(np.linalg.norm(lhs - rhs, axis=0)))


@dataclass(frozen=True)
class JacobianBound:
    """Sampled sup of ``|J|`` with the dyadic-window plateau diagnostic."""

    value: float
    growth: bool
    window_lengths: np.ndarray
    window_maxima: np.ndarray


def _trajectory(field, x, tau_max, nodes, tol, method, with_jacobian):
    d, m = x.shape
    s = np.linspace(0.0, 1.0, nodes)

    def rhs(_, y):
        z = y[: d * m].reshape(d, m)
        dz = field.b_bar(z) * tau_max
        if not with_jacobian:
            return dz.ravel()
        M = y[d * m:].reshape(d, d, m)
        dM = np.einsum("ijm,jkm->ikm", field.grad_b_bar(z), M) * tau_max
        return np.concatenate([dz.ravel(), dM.ravel()])

    y0 = x.ravel()
    if with_jacobian:
        y0 = np.concatenate([y0, np.broadcast_to(np.eye(d)[:, :, None], (d, d, m)).ravel()])
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method=method, rtol=tol, atol=tol, t_eval=s)
    if sol.status != 0:
        raise IntegrationError(f"orbit integration failed: {sol.message}", last_state=sol.y[:, -1])
    return s * tau_max, sol.y


def jacobian_bound_estimate(field, box, tau_max, samples, tol=1e-9, nodes=401, doublings=5,
                            plateau=0.01, seed=0, method="RK45"):
    """Sup of the operator norm of ``J`` over sampled ``(tau, x)``.

    Orbits start at ``samples`` points drawn uniformly (fixed seed) in the box
    ``(lower, upper)``. The running maximum over windows
    ``|tau| <= tau_max / 2^k`` must grow by less than ``plateau`` per doubling
    over the last three doublings, otherwise ``growth`` is set.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    lo, hi = (np.asarray(v, dtype=float) for v in box)
    rng = np.random.default_rng(seed)
    x = lo[:, None] + (hi - lo)[:, None] * rng.random((field.dimension, samples))
    d, m = x.shape
    norms = []
    taus = None
    for sign in (1.0, -1.0):
        # J(tau, x) = d Phi_{-tau}/dx: the backward Jacobian at +tau is the
        # forward variational solution run with -tau.
        t, y = _trajectory(field, x, -sign * tau_max, nodes, tol, method, True)
        M = y[d * m:].reshape(d, d, m, -1)
        n = np.linalg.norm(np.moveaxis(M, (0, 1), (-2, -1)), ord=2, axis=(-2, -1))
        norms.append(n.max(axis=0))
        taus = np.abs(t)
    run = np.maximum(norms[0], norms[1])
    lengths = tau_max / 2.0 ** np.arange(doublings, -1, -1)
    maxima = np.array([run[taus <= L + 1e-12].max() for L in lengths])
    ratios = maxima[-3:] / maxima[-4:-1]
    growth = bool(np.any(ratios > 1.0 + plateau))
    return JacobianBound(float(maxima[-1]), growth, lengths, maxima)


def classify_orbit(field, x, tau_max, radius, tol=1e-9, nodes=401, method="RK45"):
    """Heuristic orbit label: ``"bounded"``, ``"escaping"`` or ``"undetermined"``."""
    if tau_max <= 0:
        raise ValueError("tau_max must be positive")
    x = np.asarray(x, dtype=float).reshape(field.dimension, 1)
    verdict = []
    for sign in (1.0, -1.0):
        _, y = _trajectory(field, x, sign * tau_max, nodes, tol, method, False)
        r = np.linalg.norm(y, axis=0)
        if r.max() <= radius:
            verdict.append("bounded")
            continue
        first = int(np.argmax(r > radius))
        tail = r[first:]
        if r[-1] > radius and np.all(np.diff(tail) >= -1e-12 * max(1.0, tail.max())):
            verdict.append("escaping")
        else:
            verdict.append("undetermined")
    if verdict == ["bounded", "bounded"]:
        return "bounded"
    if verdict == ["escaping", "escaping"]:
        return "escaping"
    return "undetermined"


# ----------------------------------------------------------------------------
# Built-in fields


def constant_drift(b_star, name="constant_drift"):
    b = np.asarray(b_star, dtype=float)
    d = b.size

    def b_bar(x):
        return np.broadcast_to(b.reshape((d,) + (1,) * (np.ndim(x) - 1)), np.shape(x)).copy()

    def grad(x):
        return np.zeros((d, d) + np.shape(x)[1:])

    def flow(x, tau):
        return x + b.reshape((d,) + (1,) * (x.ndim - 1)) * tau

    def jac(x, tau):
        return np.broadcast_to(np.eye(d).reshape((d, d) + (1,) * (x.ndim - 1)),
                               (d, d) + x.shape[1:]).copy()

    return MeanFlowField(d, b_bar, grad, name=name, exact_flow=flow, exact_jacobian=jac)


def zero_field(dimension, name="zero"):
    return constant_drift(np.zeros(dimension), name=name)


def linear_field(A, b_star=None, name="linear"):
    """``b_bar(x) = A x + b_star`` with trace-free ``A``; flow via ``expm``."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    b = np.zeros(d) if b_star is None else np.asarray(b_star, dtype=float)
    if abs(np.trace(A)) > 1e-14:
        raise ValueError("linear mean field must be trace free")
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = A
    aug[:d, d] = b

    def b_bar(x):
        return np.tensordot(A, x, axes=(1, 0)) + b.reshape((d,) + (1,) * (np.ndim(x) - 1))

    def grad(x):
        return np.broadcast_to(A.reshape((d, d) + (1,) * (np.ndim(x) - 1)), (d, d) + np.shape(x)[1:]).copy()

    def flow(x, tau):
        tau = np.broadcast_to(tau, x.shape[1:])
        out = np.empty_like(x)
        flat_x = x.reshape(d, -1)
        flat_t = tau.ravel()
        res = out.reshape(d, -1)
        for t in np.unique(flat_t):
            sel = flat_t == t
            E = expm(aug * t)
            res[:, sel] = E[:d, :d] @ flat_x[:, sel] + E[:d, d:d + 1]
        return res.reshape(x.shape)

    def jac(x, tau):
        tau = np.broadcast_to(tau, x.shape[1:])
        flat_t = tau.ravel()
        out = np.empty((d, d, flat_t.size))
        for t in np.unique(flat_t):
            out[:, :, flat_t == t] = expm(-A * t)[:, :, None]
        return out.reshape((d, d) + x.shape[1:])

    return MeanFlowField(d, b_bar, grad, name=name, exact_flow=flow, exact_jacobian=jac)


def rotation(omega=1.0, dimension=2, name="rotation"):
    """Rigid rotation about the origin (about the third axis when d = 3)."""
    A = np.zeros((dimension, dimension))
    A[0, 1], A[1, 0] = -omega, omega
    return linear_field(A, name=name)


def shear(rate=1.0, name="shear"):
    """``b_bar(x1, x2) = (rate * x2, 0)``."""
    return linear_field([[0.0, rate], [0.0, 0.0]], name=name)


def asymptotic_drift(speed=1.0, amplitude=1.0, width=1.0, name="asympt_constant"):
    """``b_bar(x) = (speed, amplitude * sech^2(x1 / width))``.

    The field tends to the constant ``(speed, 0)`` as ``|x1| -> inf`` and the
    flow is available in closed form.
    """
    v, beta, R = float(speed), float(amplitude), float(width)
    if v == 0:
        raise ValueError("speed must be nonzero")

    def sech2(z):
        e = np.exp(-2 * np.abs(z))
        return 4 * e / (1 + e) ** 2

    def b_bar(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.full(x.shape[1:], v), beta * sech2(x[0] / R)])

    def grad(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros((2, 2) + x.shape[1:])
        g[1, 0] = -2.0 * beta / R * sech2(x[0] / R) * np.tanh(x[0] / R)
        return g

    def flow(x, tau):
        x1 = x[0] + v * tau
        x2 = x[1] + beta * R / v * (np.tanh(x1 / R) - np.tanh(x[0] / R))
        return np.stack([x1, np.broadcast_to(x2, x1.shape)])

    def jac(x, tau):
        x1 = x[0] - v * tau
        g = np.zeros((2, 2) + np.broadcast(x[0], tau).shape)
        g[0, 0] = g[1, 1] = 1.0
        g[1, 0] = beta / v * (sech2(x1 / R) - sech2(x[0] / R))
        return g

    return MeanFlowField(2, b_bar, grad, name=name, exact_flow=flow, exact_jacobian=jac)
