"""Dispersion matrix assembly and orbit-averaged effective diffusion.

For a cell solution at ``x`` the dispersion matrix is

    B_ij = int D (grad w_j + e_j) . (grad w_i + e_i)
         + int (b . grad w_i) w_j + int D grad w_j . e_i - int D grad w_i . e_j

and the effective tensor at a Lagrangian point ``X`` is the fast-time mean
``D_eff(X) = M_tau[ Jt B Jt^T ]`` with ``Jt(tau, X) = J(tau, Phi_tau(X))``.
"""

import hashlib
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import torus as tf
from .cell import CellProblemSpec, padded_size, solve_cell
from .errors import ClassContractError, IndefiniteTensorError, NonConvergentMeanError, ResidualError, \
    UnboundedJacobianError
from .flows import jacobian_bound_estimate
from .meanvalue import MeanEstimate, default_schedule

__all__ = [
    "BMatrix",
    "EffectiveTensor",
    "Certificate",
    "CellCache",
    "assemble_B",
    "effective_tensor",
    "coercivity_certificate",
    "TabulatedTensor",
    "tabulate_tensor",
]


@dataclass
class BMatrix:
    """Dispersion matrix with its symmetric and skew parts.

    ``values`` is the rearranged form, ``raw`` the direct form, ``sym`` the
    energy integral and ``asym = values - sym``. ``asym_simplified`` is the
    skew part computed from the shortened formula, kept as a cross-check.
    """

    tau: float
    X: object
    values: np.ndarray
    sym: np.ndarray
    asym: np.ndarray
    raw: np.ndarray
    asym_simplified: np.ndarray

    @property
    def formula_gap(self):
        return float(np.max(np.abs(self.values - self.raw)))


def _padded_nodal(f, n):
    return tf.inverse_transform(f, n)


def assemble_B(cell, spec, tol=None, tau=0.0, X=None):
    """Assemble the dispersion matrix from a cell solution.

    Integrals are evaluated on a padded grid (at least ``3N+1`` points per
    axis), which integrates every cubic product of band-``N`` fields exactly.

    Raises
    ------
    ResidualError
        When a corrector residual exceeds ``tol``.
    """
    tol = cell.tolerance if tol is None else tol
    bad = [r for r, g in zip(cell.residual_norms, cell.rhs) if r > tol * max(1.0, g.norm())]
    if bad:
        raise ResidualError(f"cell residual {max(bad):.3e} exceeds {tol:.1e}; refusing assembly")
    d, N = spec.dimension, spec.cutoff
    P = padded_size(N)
    b = _padded_nodal(spec.b_local, P)
    D = _padded_nodal(spec.D_local, P)
    w = np.stack([_padded_nodal(o, P) for o in cell.omegas])
    gw = np.stack([_padded_nodal(tf.gradient(o), P) for o in cell.omegas])  # gw[i, a]
    axes = tuple(range(-d, 0))

    def avg(v):
        return v.mean(axis=axes)

    eye = np.eye(d)
    chi = gw + eye[:, :, None].reshape((d, d) + (1,) * d)
    Dchi = np.einsum("ac...,jc...->ja...", D, chi)  # (D chi_j)_a
    Dgw = np.einsum("ac...,jc...->ja...", D, gw)  # (D grad w_j)_a
    sym = avg(np.einsum("ja...,ia...->ij...", Dchi, chi))
    adv = np.einsum("a...,ia...->i...", b, gw)  # b . grad w_i
    conv = avg(np.einsum("i...,j...->ij...", adv, w))
    cross = avg(Dgw).T  # cross[i, j] = int (D grad w_j)_i
    values = sym + conv + cross - cross.T
    bbar = spec.b_bar_local.reshape((d,) + (1,) * d)
    fluct = bbar - b  # (b_bar - b)_i
    raw = avg(np.einsum("i...,j...->ij...", fluct, w)) + avg(D) + cross
    # int w_j (b_bar - b)_i - int D grad w_i . chi_j
    asym_simpl = (avg(np.einsum("i...,j...->ij...", fluct, w))
                  - avg(np.einsum("ia...,ja...->ij...", Dgw, chi)))
    return BMatrix(float(tau), X, values, sym, values - sym, raw, asym_simpl)


@dataclass(frozen=True)
class Certificate:
    passed: bool
    margin: float


@dataclass
class EffectiveTensor:
    X: np.ndarray
    D_eff: np.ndarray
    sym_min_eig: float
    average_trace: MeanEstimate
    jacobian_floor: float
    samples: list = dc_field(default_factory=list, repr=False)

    @property
    def sym(self):
        return 0.5 * (self.D_eff + self.D_eff.T)

    @property
    def asym(self):
        return 0.5 * (self.D_eff - self.D_eff.T)


def coercivity_certificate(T, lam, tol=1e-8):
    """Pass iff ``min eig sym(D_eff) >= lam * jacobian_floor - tol``."""
    margin = float(T.sym_min_eig - lam * T.jacobian_floor)
    return Certificate(margin >= -tol, margin)


class CellCache:
    """Cell solutions keyed by the sampled coefficients.

    Two orbit nodes whose sampled ``b``, ``D`` and ``b_bar`` agree to twelve
    significant digits share one solve. This covers recurrent points of
    periodic orbits and coefficients that do not depend on ``x`` at all.
    """

    def __init__(self):
        self._store = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(spec):
        h = hashlib.sha1()
        for arr in (spec.b_local.coefficients, spec.D_local.coefficients, spec.b_bar_local):
            a = np.asarray(arr)
            h.update(np.round(a.view(float) if np.iscomplexobj(a) else a, 12).tobytes())
        return h.hexdigest()

    def get(self, spec, solver):
        k = self.key(spec)
        if k in self._store:
            self.hits += 1
            return self._store[k]
        self.misses += 1
        value = solver(spec)
        self._store[k] = value
        return value

    def __len__(self):
        return len(self._store)


def _node_product(field, X, tau, b, D, cutoff, tol, max_iter, cache, coercivity, flow_tol):
    """``(Jt B Jt^T, Jt, B)`` at one fast-time node."""
    Xc = np.asarray(X, dtype=float).reshape(-1, 1)
    x = Xc[:, 0].copy() if tau == 0 else field.flow_map(Xc, tau, flow_tol)[:, 0]
    spec = CellProblemSpec.from_callables(b, D, x, cutoff, b_bar=field.b_bar(x.reshape(-1, 1))[:, 0],
                                          coercivity=coercivity, x_parameter=(float(tau), np.asarray(X)),
                                          tolerance=tol)

    def solve(s):
        cell = solve_cell(s, tol, max_iter)
        return assemble_B(cell, s, tol, tau, X).values

    B = cache.get(spec, solve) if cache is not None else solve(spec)
    Jt = field.jacobian_map(x.reshape(-1, 1), tau, flow_tol)[:, :, 0]
    return Jt @ B @ Jt.T, Jt, B


def _sigma_min_sq(J):
    return float(np.linalg.svd(J, compute_uv=False).min() ** 2)


def effective_tensor(field, X, b, D, tau_class="periodic", period=None, nodes=32, schedule=None, tol=1e-9,
                     cutoff=16, max_iter=500, cache=None, coercivity=None, converging_levels=12,
                     converging_base=10.0, check_jacobian=True, flow_tol=1e-11):
    """Effective tensor ``M_tau[Jt B Jt^T]`` at the Lagrangian point ``X``.

    Parameters
    ----------
    tau_class : {"constant", "periodic", "converging", "generic"}
        Declared class of the fast-time signal. ``constant`` uses the single
        node ``tau = 0``; ``periodic`` uses ``nodes`` equispaced nodes over one
        period (trapezoid rule); ``converging`` takes the limit along
        ``+-converging_base * 2^k``; ``generic`` averages trapezoid windows
        of the ``schedule`` and requires the last two to agree.
    """
    X = np.asarray(X, dtype=float)
    cache = CellCache() if cache is None else cache
    args = (b, D, cutoff, tol, max_iter, cache, coercivity, flow_tol)
    samples = []

    def node(t):
        prod, Jt, B = _node_product(field, X, t, *args)
        samples.append((float(t), _sigma_min_sq(Jt)))
        return prod

    if check_jacobian and tau_class != "constant":
        horizon = 4 * period if (tau_class == "periodic" and period) else 100.0
        jb = jacobian_bound_estimate(field, (X, X), horizon, 1, tol=1e-8, nodes=201)
        if jb.growth:
            raise UnboundedJacobianError(f"Jacobian grows along the orbit of {X} (sup {jb.value:.3g})")

    if tau_class == "constant":
        value = node(0.0)
        estimate = MeanEstimate(value, True, [(0.0, value)], tol, "constant")
    elif tau_class == "periodic":
        if not period or period <= 0:
            raise ValueError("periodic averaging needs a positive period")
        taus = period * np.arange(nodes) / nodes
        vals = [node(t) for t in taus]
        value = np.mean(vals, axis=0)
        estimate = MeanEstimate(value, True, [(float(period), value)], tol, "exact-periodic")
    elif tau_class == "converging":
        trace = []
        prev = None
        value = None
        for k in range(converging_levels):
            t = converging_base * 2.0**k
            plus, minus = node(t), node(-t)
            scale = max(1.0, float(np.max(np.abs(plus))))
            if np.max(np.abs(plus - minus)) > 1e-6 * scale and k == converging_levels - 1:
                raise ClassContractError("one-sided limits of the orbit signal differ")
            current = 0.5 * (plus + minus)
            trace.append((t, current))
            if prev is not None and np.max(np.abs(current - prev)) <= tol * scale \
                    and np.max(np.abs(plus - minus)) <= tol * scale:
                value = current
                break
            prev = current
        if value is None:
            raise NonConvergentMeanError("orbit signal did not settle at infinity")
        estimate = MeanEstimate(value, True, trace, tol, "exact-converging")
    elif tau_class == "generic":
        schedule = schedule or default_schedule(levels=3, base=10.0, points_per_unit=4)
        trace = []
        for l in schedule.lengths:
            n = int(np.ceil(2 * l * schedule.quadrature_points_per_unit)) + 1
            taus = np.linspace(-l, l, n)
            vals = np.array([node(t) for t in taus])
            trace.append((float(l), np.trapezoid(vals, taus, axis=0) / (2 * l)))
        value = trace[-1][1]
        converged = len(trace) >= 2 and np.max(np.abs(trace[-1][1] - trace[-2][1])) <= tol
        estimate = MeanEstimate(value, converged, trace, tol, "window")
        if not converged:
            raise NonConvergentMeanError("orbit window averages did not converge")
    else:
        raise ValueError(f"unknown tau_class {tau_class!r}")

    value = np.asarray(value, dtype=float)
    sym = 0.5 * (value + value.T)
    floor = min(s for _, s in samples)
    return EffectiveTensor(X, value, float(np.linalg.eigvalsh(sym).min()), estimate, floor, samples)


class TabulatedTensor:
    """Tensor field sampled on a regular grid and interpolated.

    ``__call__`` takes points ``(d, ...)`` and returns ``(d, d, ...)``.
    Points outside the table are clamped to its boundary.
    """

    def __init__(self, axes, values, method="cubic"):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        self.d = len(self.axes)
        if any(len(a) < 4 for a in self.axes) and method == "cubic":
            method = "linear"
        self._interp = RegularGridInterpolator(self.axes, self.values, method=method)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        pts = np.stack([np.clip(X[a], self.axes[a][0], self.axes[a][-1]) for a in range(self.d)], axis=-1)
        out = self._interp(pts.reshape(-1, self.d))
        return np.moveaxis(out.reshape(X.shape[1:] + (self.d, self.d)), (-2, -1), (0, 1))

    def min_sym_eig(self):
        v = self.values.reshape(-1, self.d, self.d)
        return float(np.linalg.eigvalsh(0.5 * (v + np.swapaxes(v, 1, 2))).min())


def tabulate_tensor(func, lower, upper, shape, method="cubic"):
    """Evaluate ``func(X) -> (d, d)`` on a regular grid and wrap it for interpolation."""
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    d = len(axes)
    vals = np.array([func(p) for p in pts]).reshape(tuple(shape) + (d, d))
    table = TabulatedTensor(axes, vals, method)
    if table.min_sym_eig() <= 0:
        raise IndefiniteTensorError("tabulated tensor has an indefinite symmetric part")
    return table


def refinement_error(func, lower, upper, shape, method="cubic"):
    """Max gap between tables at ``shape`` and ``2*shape - 1`` on the fine nodes."""
    coarse = tabulate_tensor(func, lower, upper, shape, method)
    fine_shape = [2 * n - 1 for n in shape]
    fine = tabulate_tensor(func, lower, upper, fine_shape, method)
    mesh = np.stack(np.meshgrid(*fine.axes, indexing="ij"))
    return float(np.max(np.abs(coarse(mesh) - fine(mesh)))), fine
