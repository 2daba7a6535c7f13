"""Finite-volume solvers for the oscillating problem and its homogenized limit.

Both solvers work on a periodic box of cell centres. Convection uses
conservative third-order upwind-biased face fluxes advanced by SSP-RK3;
diffusion uses the symmetric operator ``L = -2^-d sum_s G_s^T K G_s`` over
all forward/backward difference combinations ``s`` (so ``1^T L = 0`` and a
constant skew part of ``K`` cancels exactly) advanced by Crank-Nicolson.
The oscillating problem is split as diffusion/2, convection, diffusion/2.

For a truncated whole-space problem (``Box.wrap = False``) the solver still
uses periodic closure; the flag only controls how remapping treats points
that leave the box.
"""

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import map_coordinates
from scipy.sparse.linalg import splu

from .effective import EffectiveTensor, effective_tensor
from .errors import (CFLError, ClassContractError, CoercivityError, IndefiniteTensorError, LinearSolveError,
                     NonConvergentMeanError, NotSolenoidalError)
from .flows import constant_drift
from .meanvalue import MeanEstimate, TemporalSignal, mean_value
from .torus import TorusField, mean as torus_mean, nodal_grid

__all__ = [
    "Box",
    "EpsProblemSpec",
    "HomProblemSpec",
    "GridSolution",
    "CoverageWarning",
    "solve_eps",
    "solve_homogenized",
    "lagrangian_remap",
    "shear_fourier_solution",
    "shear_reference",
    "lagrangian_effective_tensor",
    "solve_perturbed_model",
    "PerturbedResult",
    "space_time_l2",
    "gaussian",
]

CFL_CONSTANT = 0.25


class CoverageWarning(UserWarning):
    """Remap targets fell outside the solver box."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of ``shape`` cells; ``wrap`` marks a true torus."""

    lower: tuple
    upper: tuple
    shape: tuple
    wrap: bool = True

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.shape)):
            raise ValueError("box lower/upper/shape lengths differ")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("box upper must exceed lower")

    @property
    def dimension(self):
        return len(self.shape)

    @property
    def spacing(self):
        return np.array([(u - l) / n for l, u, n in zip(self.lower, self.upper, self.shape)])

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        return [l + (np.arange(n) + 0.5) * h for l, n, h in zip(self.lower, self.shape, self.spacing)]

    def centers(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def face_points(self, axis):
        """Cell centres shifted by half a cell in ``axis`` (upper faces)."""
        c = self.centers()
        c[axis] = c[axis] + 0.5 * self.spacing[axis]
        return c

    @classmethod
    def from_spacing(cls, lower, upper, spacing, wrap=True):
        shape = tuple(int(math.ceil((u - l) / spacing - 1e-9)) for l, u in zip(lower, upper))
        return cls(tuple(map(float, lower)), tuple(map(float, upper)), shape, wrap)


@dataclass
class EpsProblemSpec:
    """Oscillating problem ``u_t + b(x, x/eps) . grad u / eps - div(D(x, x/eps) grad u) = 0``.

    ``b(x, y)`` maps ``(d, ...)`` points to ``(d, ...)`` velocities and
    ``D(x, y)`` to ``(d, d, ...)`` matrices. Each component ``b_a`` must not
    depend on ``x_a`` (this makes the face fluxes exactly divergence free).
    """

    epsilon: float
    b: Callable
    D: Callable
    initial: object
    box: Box
    T: float
    dt: Optional[float] = None
    output_times: Optional[list] = None
    n_frames: int = 11
    cfl: float = CFL_CONSTANT

    def __post_init__(self):
        if self.epsilon <= 0 or self.T <= 0:
            raise ValueError("epsilon and T must be positive")


@dataclass
class HomProblemSpec:
    """Homogenized problem ``u_t + h . grad u - div(D_eff grad u) = 0``.

    ``D_eff`` is a constant ``(d, d)`` matrix or a callable on ``(d, ...)``
    points; ``drift`` (optional) is a constant vector or a callable.
    """

    D_eff: object
    initial: object
    box: Box
    T: float
    dt: Optional[float] = None
    output_times: Optional[list] = None
    n_frames: int = 11
    drift: object = None
    steps_per_frame: int = 20


@dataclass
class GridSolution:
    """Frames at output times plus per-step mass and L2 traces."""

    box: Box
    times: np.ndarray
    frames: list
    mass_trace: np.ndarray
    l2_trace: np.ndarray
    step_times: np.ndarray
    epsilon: Optional[float] = None
    kind: str = "eps"
    meta: dict = dc_field(default_factory=dict)

    def mass_drift(self):
        """Largest mass change relative to ``max(|mass_0|, ||u_0||_1)``."""
        m0 = self.mass_trace[0]
        l1 = float(np.abs(self.frames[0]).sum() * self.box.cell_volume)
        return float(np.max(np.abs(self.mass_trace - m0)) / max(abs(m0), l1, np.finfo(float).tiny))

    def max_l2_increase(self):
        """Largest per-step increase of the L2 norm relative to the initial norm."""
        if len(self.l2_trace) < 2:
            return 0.0
        return float(max(np.max(np.diff(self.l2_trace)), 0.0) / max(self.l2_trace[0], np.finfo(float).tiny))

    def frame_at(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"no frame at t = {t}")
        return self.frames[idx]


def gaussian(center, sigma2, mass=1.0):
    """Isotropic Gaussian density ``x -> mass * N(center, sigma2 I)``."""
    c = np.asarray(center, dtype=float)

    def u(x):
        d = x.shape[0]
        r2 = sum((x[a] - c[a]) ** 2 for a in range(d))
        return mass * np.exp(-r2 / (2 * sigma2)) / (2 * np.pi * sigma2) ** (d / 2)

    return u


def _initial_values(initial, box):
    if callable(initial):
        return np.asarray(initial(box.centers()), dtype=float)
    values = np.asarray(initial, dtype=float)
    if values.shape != tuple(box.shape):
        raise ValueError("initial array does not match the box shape")
    return values.copy()


def _output_times(T, output_times, n_frames):
    if output_times is None:
        return np.linspace(0.0, T, n_frames)
    t = np.unique(np.concatenate([[0.0], np.asarray(output_times, dtype=float), [T]]))
    if t[0] < 0 or t[-1] > T:
        raise ValueError("output times must lie in [0, T]")
    return t


# ----------------------------------------------------------------------------
# Spatial operators


def _difference(n, h, forward):
    e = np.ones(n)
    if forward:
        m = sp.diags([-e, e[:-1]], [0, 1], shape=(n, n), format="lil")
        m[n - 1, 0] = 1.0
    else:
        m = sp.diags([e, -e[:-1]], [0, -1], shape=(n, n), format="lil")
        m[0, n - 1] = -1.0
    return (m.tocsr() / h)


def _axis_operator(op1d, axis, shape):
    mats = [sp.identity(n, format="csr") for n in shape]
    mats[axis] = op1d
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def diffusion_matrix(K, box):
    """Sparse ``L = -2^-d sum_s G_s^T diag(K) G_s`` for cell-centred ``K``.

    ``K`` has shape ``(d, d) + box.shape`` or ``(d, d)`` for a constant.
    """
    d = box.dimension
    shape = tuple(box.shape)
    h = box.spacing
    K = np.asarray(K, dtype=float)
    if K.shape == (d, d):
        K = np.broadcast_to(K[(Ellipsis,) + (None,) * d], (d, d) + shape)
    G = {}
    for a in range(d):
        for fw in (True, False):
            G[a, fw] = _axis_operator(_difference(shape[a], h[a], fw), a, shape)
    n = int(np.prod(shape))
    L = sp.csr_matrix((n, n))
    for s in range(2**d):
        signs = [bool((s >> a) & 1) for a in range(d)]
        for a in range(d):
            for c in range(d):
                kac = K[a, c].ravel()
                if not np.any(kac):
                    continue
                L = L - G[a, signs[a]].T @ sp.diags(kac) @ G[c, signs[c]]
    return (L / 2**d).tocsr()


def _check_coercive(K, what):
    d = K.shape[0]
    sym = 0.5 * (K + np.swapaxes(K, 0, 1))
    eig = np.linalg.eigvalsh(np.moveaxis(sym.reshape(d, d, -1), 2, 0))
    if eig.min() <= 0:
        raise IndefiniteTensorError(f"{what}: symmetric part has eigenvalue {eig.min():.3e}")
    return float(eig.min()), float(eig.max())


class _ImplicitDiffusion:
    """Crank-Nicolson steps ``(I - c L)^{-1} (I + c L)`` with cached factors."""

    def __init__(self, K, box):
        self.box = box
        self.shape = tuple(box.shape)
        K = np.asarray(K, dtype=float)
        d = box.dimension
        self.constant = K.shape == (d, d) or bool(np.all(K == K[(Ellipsis,) + (0,) * d][(Ellipsis,) + (None,) * d]))
        self.L = diffusion_matrix(K if K.shape == (d, d) or not self.constant
                                  else K[(Ellipsis,) + (0,) * d], box)
        self._factors = {}
        if self.constant:
            impulse = np.zeros(int(np.prod(self.shape)))
            impulse[0] = 1.0
            # L is block circulant: its eigenvalues are the DFT of one column
            self.symbol = np.fft.rfftn((self.L @ impulse).reshape(self.shape))
            self._multipliers = {}

    def step(self, u, c):
        if self.constant:
            mult = self._multipliers.get(c)
            if mult is None:
                mult = (1.0 + c * self.symbol) / (1.0 - c * self.symbol)
                self._multipliers[c] = mult
            return np.fft.irfftn(np.fft.rfftn(u) * mult, s=self.shape, axes=tuple(range(len(self.shape))))
        flat = u.ravel()
        rhs = flat + c * (self.L @ flat)
        lu = self._factors.get(c)
        if lu is None:
            A = (sp.identity(flat.size, format="csc") - c * self.L).tocsc()
            try:
                lu = splu(A)
            except RuntimeError as exc:  # pragma: no cover - singular factor
                raise LinearSolveError(str(exc)) from exc
            self._factors[c] = lu
        out = lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise LinearSolveError("implicit diffusion solve produced non-finite values")
        return out.reshape(self.shape)


class _Convection:
    """Conservative third-order upwind-biased fluxes with fixed face velocities."""

    def __init__(self, velocities, box, check_divergence=True):
        self.v = [np.asarray(v, dtype=float) for v in velocities]
        self.h = box.spacing
        self.d = box.dimension
        if check_divergence:
            div = sum((v - np.roll(v, 1, axis=a)) / self.h[a] for a, v in enumerate(self.v))
            scale = max(float(np.max(np.abs(v))) for v in self.v) / float(np.min(self.h))
            if np.max(np.abs(div)) > 1e-10 * max(scale, 1.0):
                raise NotSolenoidalError(
                    "discrete face velocities are not divergence free; each b_a must not depend on x_a")
        self.speed = max(float(np.max(np.abs(v))) for v in self.v)
        self.active = [a for a in range(self.d) if np.any(self.v[a])]
        # faces -1/2 .. n-1/2 along each axis, periodic
        self.v_ext, self.pos_ext = {}, {}
        for a in self.active:
            v = self.v[a]
            ext = np.concatenate([np.take(v, [-1], axis=a), v], axis=a)
            self.v_ext[a] = ext / 6.0
            self.pos_ext[a] = (ext >= 0).astype(float)

    @staticmethod
    def _window(ext, axis, start, length):
        idx = [slice(None)] * ext.ndim
        idx[axis] = slice(start, start + length)
        return ext[tuple(idx)]

    def rate(self, u):
        out = np.zeros_like(u)
        for a in self.active:
            n = u.shape[a]
            ext = np.concatenate([np.take(u, [-2, -1], axis=a), u, np.take(u, [0, 1], axis=a)], axis=a)
            um = self._window(ext, a, 0, n + 1)
            uc = self._window(ext, a, 1, n + 1)
            up = self._window(ext, a, 2, n + 1)
            upp = self._window(ext, a, 3, n + 1)
            # face value for v < 0 plus the switch to the v >= 0 stencil
            face = 2 * uc + 5 * up - upp
            face += self.pos_ext[a] * (3 * uc - um - 3 * up + upp)
            flux = self.v_ext[a] * face
            out -= np.diff(flux, axis=a) / self.h[a]
        return out

    def step(self, u, dt):
        u1 = u + dt * self.rate(u)
        u2 = 0.75 * u + 0.25 * (u1 + dt * self.rate(u1))
        return u / 3.0 + 2.0 / 3.0 * (u2 + dt * self.rate(u2))


def _face_velocities(b, box, scale, drift=False):
    vs = []
    for a in range(box.dimension):
        pts = box.face_points(a)
        vs.append(np.asarray(b(pts), dtype=float)[a] * scale)
    return vs


def _l2(u, box):
    return float(np.sqrt(np.sum(u * u) * box.cell_volume))


def _mass(u, box):
    return float(np.sum(u) * box.cell_volume)


def _march(u, box, times, max_dt, step, meta):
    frames = [u.copy()]
    mass, l2, stamps = [_mass(u, box)], [_l2(u, box)], [0.0]
    t = 0.0
    for t_next in times[1:]:
        span = t_next - t
        n_sub = max(1, int(math.ceil(span / max_dt - 1e-12)))
        dt = span / n_sub
        for k in range(n_sub):
            u = step(u, dt)
            mass.append(_mass(u, box))
            l2.append(_l2(u, box))
            stamps.append(t + (k + 1) * dt)
        t = t_next
        frames.append(u.copy())
    meta["steps"] = len(stamps) - 1
    return frames, np.array(mass), np.array(l2), np.array(stamps)


def solve_eps(spec):
    """Solve the oscillating problem on ``spec.box`` up to ``spec.T``.

    The time step is ``cfl * eps * min(dx) / sup|b|`` unless a smaller
    ``spec.dt`` is given.

    Raises
    ------
    CFLError
        ``spec.dt`` exceeds the convection stability limit.
    CoercivityError
        ``D`` is not uniformly positive definite on the grid.
    """
    box, eps = spec.box, spec.epsilon
    d = box.dimension
    x = box.centers()
    K = np.asarray(spec.D(x, x / eps), dtype=float)
    K = np.broadcast_to(K, (d, d) + tuple(box.shape))
    try:
        lam, Lam = _check_coercive(K, "D")
    except IndefiniteTensorError as exc:
        raise CoercivityError(str(exc)) from exc

    def bfun(p):
        return spec.b(p, p / eps)

    conv = _Convection(_face_velocities(bfun, box, 1.0 / eps), box)
    sup_b = conv.speed * eps
    h_min = float(np.min(box.spacing))
    dt_max = spec.cfl * eps * h_min / sup_b if sup_b > 0 else spec.T / 50
    if spec.dt is not None:
        if spec.dt > dt_max * (1 + 1e-12):
            raise CFLError(f"dt = {spec.dt:.3e} exceeds the stability limit {dt_max:.3e}")
        dt_max = spec.dt
    diff = _ImplicitDiffusion(K, box)
    moving = sup_b > 0

    def step(u, dt):
        u = diff.step(u, dt / 4)
        if moving:
            u = conv.step(u, dt)
        return diff.step(u, dt / 4)

    u0 = _initial_values(spec.initial, box)
    times = _output_times(spec.T, spec.output_times, spec.n_frames)
    meta = {"dt_max": dt_max, "lambda": lam, "Lambda": Lam, "sup_b": sup_b}
    frames, mass, l2, stamps = _march(u0, box, times, dt_max, step, meta)
    return GridSolution(box, times, frames, mass, l2, stamps, eps, "eps", meta)


def _tensor_on_grid(D_eff, box):
    d = box.dimension
    if callable(D_eff):
        K = np.asarray(D_eff(box.centers()), dtype=float)
        return np.broadcast_to(K, (d, d) + tuple(box.shape))
    K = np.asarray(D_eff, dtype=float)
    if K.shape != (d, d):
        raise ValueError("constant D_eff must be a (d, d) matrix")
    return K


def solve_homogenized(spec):
    """Crank-Nicolson solve of the homogenized divergence-form equation.

    A drift term, if present, is added by Strang splitting with the same
    upwind-biased fluxes as :func:`solve_eps`.

    Raises
    ------
    IndefiniteTensorError
        The symmetric part of ``D_eff`` is not positive definite somewhere.
    """
    box = spec.box
    K = _tensor_on_grid(spec.D_eff, box)
    _check_coercive(K if K.ndim > 2 else K[(Ellipsis, None)], "D_eff")
    diff = _ImplicitDiffusion(K, box)
    times = _output_times(spec.T, spec.output_times, spec.n_frames)
    gaps = np.diff(times)
    max_dt = spec.dt if spec.dt is not None else float(gaps.min()) / spec.steps_per_frame
    conv = None
    if spec.drift is not None:
        drift = spec.drift
        if not callable(drift):
            vec = np.asarray(drift, dtype=float)
            drift = lambda p: np.broadcast_to(vec.reshape((-1,) + (1,) * (p.ndim - 1)), p.shape)  # noqa: E731
        conv = _Convection(_face_velocities(drift, box, 1.0), box)
        if conv.speed > 0:
            max_dt = min(max_dt, CFL_CONSTANT * float(np.min(box.spacing)) / conv.speed)
        else:
            conv = None

    def step(u, dt):
        if conv is None:
            return diff.step(u, dt / 2)
        u = diff.step(u, dt / 4)
        u = conv.step(u, dt)
        return diff.step(u, dt / 4)

    u0 = _initial_values(spec.initial, box)
    meta = {"dt_max": max_dt}
    frames, mass, l2, stamps = _march(u0, box, times, max_dt, step, meta)
    return GridSolution(box, times, frames, mass, l2, stamps, None, "homogenized", meta)


def lagrangian_remap(sol, field, epsilon=None, order=3, warn=True):
    """Frames in Lagrangian coordinates, ``v(t, X) = u(t, Phi_{t/eps}(X))``.

    Values are interpolated with cubic splines (periodic closure). On a
    truncated box, targets leaving the box are set to zero and a
    :class:`CoverageWarning` reports the covered fraction (``warn=False``
    only records it in ``meta["coverage"]``).
    """
    eps = sol.epsilon if epsilon is None else epsilon
    box = sol.box
    X = box.centers()
    lo = np.asarray(box.lower).reshape((-1,) + (1,) * box.dimension)
    hi = np.asarray(box.upper).reshape((-1,) + (1,) * box.dimension)
    h = box.spacing.reshape((-1,) + (1,) * box.dimension)
    frames = []
    worst = 1.0
    for t, u in zip(sol.times, sol.frames):
        if t == 0:
            frames.append(u.copy())
            continue
        x = field.flow_map(X.reshape(box.dimension, -1), t / eps).reshape(X.shape)
        coords = (x - lo) / h - 0.5
        v = map_coordinates(u, coords, order=order, mode="grid-wrap")
        if not box.wrap:
            inside = np.all((x >= lo) & (x <= hi), axis=0)
            worst = min(worst, float(inside.mean()))
            v = np.where(inside, v, 0.0)
        frames.append(v)
    if worst < 1.0 and warn:
        warnings.warn(f"remap targets outside the box; minimum coverage {worst:.4f}", CoverageWarning,
                      stacklevel=2)
    mass = np.array([_mass(v, box) for v in frames])
    l2 = np.array([_l2(v, box) for v in frames])
    meta = dict(sol.meta, coverage=worst)
    return GridSolution(box, np.array(sol.times), frames, mass, l2, np.array(sol.times), eps, "lagrangian", meta)


def space_time_l2(a, b):
    """``||a - b||`` in ``L2((0,T) x box)`` by the trapezoid rule over frames."""
    if not np.allclose(a.times, b.times):
        raise ValueError("solutions have different output times")
    sq = np.array([np.sum((u - v) ** 2) * a.box.cell_volume for u, v in zip(a.frames, b.frames)])
    return float(np.sqrt(np.trapezoid(sq, a.times)))


# ----------------------------------------------------------------------------
# Shear flow closed form


def shear_fourier_solution(xi1, xi2, t, epsilon, initial_hat):
    """Lagrangian Fourier solution of the shear problem.

    Returns ``initial_hat * exp(-t xi1^2 - t xi2^2 + (t^2/eps) xi1 xi2
    - t^3 xi1^2 / (3 eps^2))``, the exact integral of
    ``-|xi1|^2 - |xi2 - (s/eps) xi1|^2`` over ``s in (0, t)``.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    expo = -t * xi1**2 - t * xi2**2 + (t * t / epsilon) * xi1 * xi2 - t**3 * xi1**2 / (3 * epsilon**2)
    return np.exp(expo) * initial_hat


def shear_reference(box, initial, t, epsilon, rate=1.0):
    """Eulerian shear solution ``u(t, x) = v(t, x1 - rate t x2 / eps, x2)`` on the box grid.

    ``v`` is obtained from :func:`shear_fourier_solution` on the periodic
    box; the shear back to Eulerian coordinates is a spectrally exact
    row-wise Fourier shift.
    """
    if box.dimension != 2:
        raise ValueError("shear reference is two dimensional")
    u0 = _initial_values(initial, box)
    n1, n2 = box.shape
    h1, h2 = box.spacing
    xi1 = 2 * np.pi * np.fft.fftfreq(n1, h1)
    xi2 = 2 * np.pi * np.fft.fftfreq(n2, h2)
    K1, K2 = np.meshgrid(xi1, xi2, indexing="ij")
    # a shear rate r is the unit shear with time rescaled: eps -> eps / r
    v_hat = shear_fourier_solution(K1, K2, t, epsilon / rate, np.fft.fft2(u0))
    partial = np.fft.ifft(v_hat, axis=1)  # (xi1, x2)
    x2 = box.axes()[1]
    tau = rate * t / epsilon
    # phase of the cell-centre offset along x1 is accounted for by shifting
    # relative to the grid: u(x1, x2) = v(x1 - tau x2, x2)
    shifted = partial * np.exp(-1j * np.outer(xi1, tau * x2))
    return np.fft.ifft(shifted, axis=0).real


# ----------------------------------------------------------------------------
# Lagrangian-only limit and perturbed model


def lagrangian_effective_tensor(field, D, X, tau_class="periodic", period=None, nodes=32, tol=1e-10,
                                converging_levels=20, converging_base=10.0):
    """``M_tau[Jt D(Phi_tau X) Jt^T]`` with no cell problem.

    ``D`` maps points ``(d, m)`` to ``(d, d, m)``.
    """
    X = np.asarray(X, dtype=float).reshape(-1, 1)

    def product(taus):
        taus = np.asarray(taus, dtype=float)
        pts = np.repeat(X, taus.size, axis=1)
        x = field.flow_map(pts, taus)
        J = field.jacobian_map(x, taus)
        Dx = np.asarray(D(x), dtype=float)
        return np.einsum("ikm,klm,jlm->mij", J, Dx, J), J

    if tau_class == "constant":
        taus = np.zeros(1)
    elif tau_class == "periodic":
        if not period:
            raise ValueError("periodic averaging needs a period")
        taus = period * np.arange(nodes) / nodes
    elif tau_class == "converging":
        t = converging_base * 2.0 ** np.arange(converging_levels)
        taus = np.concatenate([t, -t])
    else:
        sig = TemporalSignal.generic(lambda s: product(s)[0])
        est = mean_value(sig, tol=tol)
        if not est.converged:
            raise NonConvergentMeanError("Lagrangian tensor window averages did not converge")
        value = np.asarray(est.value)
        sym = 0.5 * (value + value.T)
        return EffectiveTensor(X[:, 0], value, float(np.linalg.eigvalsh(sym).min()), est, 1.0)
    vals, J = product(taus)
    if tau_class == "converging":
        half = taus.size // 2
        plus, minus = vals[:half], vals[half:]
        if np.max(np.abs(plus[-1] - minus[-1])) > 1e-6 * max(1.0, np.abs(plus[-1]).max()):
            raise ClassContractError("one-sided limits differ")
        value = 0.5 * (plus[-1] + minus[-1])
        trace = [(float(t), 0.5 * (p + m)) for t, p, m in zip(taus[:half], plus, minus)]
    else:
        value = vals.mean(axis=0)
        trace = [(float(period or 0.0), value)]
    sv = np.linalg.svd(np.moveaxis(J, 2, 0), compute_uv=False)
    floor = float(sv.min() ** 2)
    sym = 0.5 * (value + value.T)
    est = MeanEstimate(value, True, trace, tol, f"exact-{tau_class}")
    return EffectiveTensor(X[:, 0], value, float(np.linalg.eigvalsh(sym).min()), est, floor)


@dataclass
class PerturbedResult:
    h_star: np.ndarray
    convective_field: np.ndarray
    convective_estimate: MeanEstimate
    tensor: EffectiveTensor
    homogenized: GridSolution
    eps_solution: Optional[GridSolution] = None
    remapped: Optional[GridSolution] = None


def convective_field(h1, h_star, X, h1_class="converging", period=None, cutoff=8, tol=1e-9):
    """``M_tau[ y-mean of h1(X + h_star tau, y) ]`` at points ``X`` of shape ``(d, m)``."""
    X = np.asarray(X, dtype=float)
    d, m = X.shape
    n = 2 * cutoff + 1
    y = nodal_grid(n, d).reshape(d, -1)
    hs = np.asarray(h_star, dtype=float).reshape(d, 1)

    def evaluate(taus):
        out = np.empty((len(taus), d, m))
        for k, t in enumerate(taus):
            xt = X + hs * t
            xx = np.repeat(xt, y.shape[1], axis=1)
            yy = np.tile(y, (1, m))
            vals = np.asarray(h1(xx, yy), dtype=float).reshape(d, m, y.shape[1])
            out[k] = vals.mean(axis=2)
        return out

    if h1_class == "constant":
        v = evaluate([0.0])[0]
        return v, MeanEstimate(v, True, [], tol, "constant")
    sig = TemporalSignal(evaluate, h1_class, period=period)
    est = mean_value(sig, tol=tol)
    if not est.converged:
        raise NonConvergentMeanError("convective field mean did not converge")
    return np.asarray(est.value), est


def solve_perturbed_model(h, h1, D, epsilon, box, initial, T, cutoff=16, h1_class="converging", period=None,
                          n_frames=11, run_eps=False, tol=1e-10):
    """Perturbed model ``b = h(x/eps) + eps h1(x, x/eps)`` with constant mean drift.

    The effective tensor comes from the cell problem of ``h`` alone (constant
    drift, so the fast-time average is a single node); the convective field
    is the fast-time mean of the y-average of ``h1`` along ``x + h* tau``.
    ``h(x, y)`` and ``D(x, y)`` follow the cell-problem convention (``x`` of
    shape ``(d,)``); ``h1(x, y)`` takes matched ``(d, m)`` arrays.
    """
    d = box.dimension
    h_star = np.atleast_1d(torus_mean(TorusField.from_function(lambda y: h(np.zeros(d), y), d, cutoff)))
    field = constant_drift(h_star)
    tensor = effective_tensor(field, np.zeros(d), h, D, tau_class="constant", cutoff=cutoff, tol=tol)
    X = box.centers().reshape(d, -1)
    conv, est = convective_field(h1, h_star, X, h1_class, period, cutoff=min(cutoff, 8), tol=tol)
    conv_grid = conv.reshape((d,) + tuple(box.shape))
    uniform = np.allclose(conv, conv[:, :1], rtol=0, atol=1e-12)
    if uniform:
        drift = conv[:, 0]
    else:
        interps = [RegularGridInterpolator(box.axes(), conv_grid[a], bounds_error=False, fill_value=None)
                   for a in range(d)]

        def drift(p):
            pts = np.moveaxis(p, 0, -1)
            return np.stack([f(pts) for f in interps])

    hom = solve_homogenized(HomProblemSpec(tensor.D_eff, initial, box, T, n_frames=n_frames,
                                           drift=None if uniform and not np.any(drift) else drift))
    result = PerturbedResult(h_star, conv_grid, est, tensor, hom)
    if run_eps:
        def b(x, y):
            grid_shape = x.shape[1:]
            hv = _pointwise(h, x, y)
            h1v = np.asarray(h1(x.reshape(d, -1), y.reshape(d, -1)), dtype=float).reshape((d,) + grid_shape)
            return hv + epsilon * h1v

        def Dx(x, y):
            return _pointwise(D, x, y, matrix=True)

        eps_sol = solve_eps(EpsProblemSpec(epsilon, b, Dx, initial, box, T, n_frames=n_frames))
        result.eps_solution = eps_sol
        result.remapped = lagrangian_remap(eps_sol, field, epsilon)
    return result


def _pointwise(f, x, y, matrix=False):
    """Evaluate a cell-convention coefficient ``f(x0, y)`` on grids of ``y``.

    Cell-convention callables take a single point ``x0``; here the
    coefficient is assumed independent of ``x`` and evaluated once on ``y``.
    """
    d = x.shape[0]
    out = np.asarray(f(np.zeros(d), y), dtype=float)
    shape = ((d, d) if matrix else (d,)) + x.shape[1:]
    return np.broadcast_to(out, shape)
