"""Periodic cell problem solved by Fourier-Galerkin Krylov iteration.

For frozen macroscopic point ``x`` the correctors ``omega_i(y)`` solve

    b . (grad omega_i + e_i) - div(D (grad omega_i + e_i)) = b_bar_i

on the unit torus with zero mean. Unknowns are nodal values on the
``(2N+1)^d`` grid (equivalently the band-limited Fourier coefficients);
products are formed on a padded grid with at least ``3N+1`` points per axis,
so the Galerkin projection of every quadratic term is exact.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.fft import next_fast_len
from scipy.sparse.linalg import LinearOperator, gmres

from . import torus as tf
from .errors import CoercivityError, CompatibilityError, ConvergenceError, NotSolenoidalError

__all__ = [
    "CellProblemSpec",
    "CellSolution",
    "compatibility_residual",
    "solve_cell",
    "solve_cell_flowrep",
    "default_cutoff",
    "padded_size",
    "cell_operator_matrix",
]


def default_cutoff(dimension):
    return {1: 256, 2: 64, 3: 16}[dimension]


def padded_size(cutoff):
    """Padded grid size (>= 3N+1) for exact quadratic and cubic products."""
    return next_fast_len(3 * cutoff + 1)


def _nodal(field, n):
    return tf.inverse_transform(field, n)


@dataclass
class CellProblemSpec:
    """Coefficients of one cell problem.

    Attributes
    ----------
    x_parameter : point or (tau, X) pair, only recorded for provenance.
    b_local : vector TorusField, ``y -> b(x, y)``.
    D_local : matrix TorusField, ``y -> D(x, y)``.
    b_bar_local : ndarray, ``b_bar(x)``.
    coercivity : (lambda, Lambda) ellipticity bounds.
    """

    x_parameter: object
    b_local: tf.TorusField
    D_local: tf.TorusField
    b_bar_local: np.ndarray
    coercivity: tuple
    tolerance: float = 1e-9

    @property
    def dimension(self):
        return self.b_local.dimension

    @property
    def cutoff(self):
        return self.b_local.cutoff

    @classmethod
    def from_callables(cls, b, D, x, cutoff, b_bar=None, coercivity=None, x_parameter=None, tolerance=1e-9):
        """Sample ``b(x, y)`` and ``D(x, y)`` on the ``(2N+1)^d`` grid.

        ``b`` and ``D`` receive ``x`` of shape ``(d,)`` and ``y`` of shape
        ``(d, n, ..., n)``. ``b_bar`` defaults to the torus mean of ``b``;
        ``coercivity`` defaults to the nodal eigenvalue range of ``D``.
        """
        x = np.asarray(x, dtype=float)
        d = x.size
        n = 2 * cutoff + 1
        y = tf.nodal_grid(n, d)
        grid = (n,) * d
        bv = np.broadcast_to(np.asarray(b(x, y), dtype=float), (d,) + grid)
        Dv = np.broadcast_to(np.asarray(D(x, y), dtype=float), (d, d) + grid)
        b_local = tf.transform(bv, d, cutoff)
        D_local = tf.transform(Dv, d, cutoff)
        if b_bar is None:
            b_bar = np.atleast_1d(tf.mean(b_local))
        if coercivity is None:
            eig = np.linalg.eigvalsh(np.moveaxis(0.5 * (Dv + np.swapaxes(Dv, 0, 1)), (0, 1), (-2, -1)))
            coercivity = (float(eig.min()), float(eig.max()))
        return cls(x if x_parameter is None else x_parameter, b_local, D_local,
                   np.asarray(b_bar, dtype=float).reshape(d), tuple(coercivity), tolerance)

    def validate(self, tol=None):
        """Check incompressibility, mean consistency, symmetry and ellipticity."""
        tol = self.tolerance if tol is None else tol
        N = self.cutoff
        scale = max(1.0, self.b_local.norm())
        div = tf.divergence(self.b_local).norm()
        if div > tol * scale * 2 * np.pi * max(N, 1):
            raise NotSolenoidalError(f"cell velocity divergence {div:.3e}")
        gap = float(np.max(np.abs(np.atleast_1d(tf.mean(self.b_local)) - self.b_bar_local)))
        if gap > tol * scale:
            raise CompatibilityError(f"mean of b(x, .) differs from b_bar(x) by {gap:.3e}")
        Dv = _nodal(self.D_local, 2 * N + 1)
        asym = float(np.max(np.abs(Dv - np.swapaxes(Dv, 0, 1))))
        if asym > tol * max(1.0, float(np.max(np.abs(Dv)))):
            raise CoercivityError(f"D is not symmetric ({asym:.3e})")
        eig = np.linalg.eigvalsh(np.moveaxis(Dv, (0, 1), (-2, -1)))
        lam, Lam = self.coercivity
        slack = 1e-9 * max(1.0, abs(Lam))
        if lam <= 0 or eig.min() < lam - slack or eig.max() > Lam + slack:
            raise CoercivityError(
                f"nodal eigenvalues [{eig.min():.4g}, {eig.max():.4g}] outside declared [{lam:.4g}, {Lam:.4g}]")
        return True


@dataclass
class CellSolution:
    omegas: list
    residual_norms: np.ndarray
    mean_residuals: np.ndarray
    iterations: int
    tolerance: float
    rhs: list = dc_field(default_factory=list, repr=False)


def compatibility_residual(g):
    """``|mean(g)|`` for a scalar torus field."""
    return float(abs(tf.mean(g)))


class _CellOperator:
    """Matrix-free Galerkin operator on nodal values of the (2N+1)^d grid."""

    def __init__(self, spec):
        d, N = spec.dimension, spec.cutoff
        self.d, self.N = d, N
        self.M = 2 * N + 1
        self.P = padded_size(N)
        self.shape = (self.M,) * d
        self.axes = tuple(range(-d, 0))
        m = self.M
        k1 = np.fft.fftfreq(m, 1.0 / m).round()
        self.k = np.meshgrid(*([k1] * d), indexing="ij")
        self.b_pad = _nodal(spec.b_local, self.P)
        self.D_pad = _nodal(spec.D_local, self.P)
        Dbar = np.atleast_2d(tf.mean(spec.D_local))
        symbol = sum(4 * np.pi**2 * Dbar[a, c] * self.k[a] * self.k[c] for a in range(d) for c in range(d))
        symbol = np.asarray(symbol, dtype=float)
        symbol[(0,) * d] = 1.0
        self.precond_symbol = symbol

    def to_hat(self, v):
        return np.fft.fftn(v.reshape(self.shape), axes=self.axes) / self.M**self.d

    def to_nodal(self, h):
        return (np.fft.ifftn(h, axes=self.axes) * self.M**self.d).real.ravel()

    def _pad(self, h):
        full = tf.embed_coefficients(h, self.d, self.P)
        return (np.fft.ifftn(full, axes=self.axes) * self.P**self.d).real

    def _unpad(self, v):
        spectrum = np.fft.fftn(v, axes=self.axes) / self.P**self.d
        return tf._truncate(spectrum, self.d, self.N)

    def gradient_padded(self, w_hat):
        return np.stack([self._pad(2j * np.pi * self.k[a] * w_hat) for a in range(self.d)])

    def apply_hat(self, w_hat):
        grad = self.gradient_padded(w_hat)
        conv = np.einsum("a...,a...->...", self.b_pad, grad)
        flux = np.einsum("ac...,c...->a...", self.D_pad, grad)
        out = self._unpad(conv)
        for a in range(self.d):
            out = out - 2j * np.pi * self.k[a] * self._unpad(flux[a])
        out[(0,) * self.d] = w_hat[(0,) * self.d]
        return out

    def matvec(self, v):
        return self.to_nodal(self.apply_hat(self.to_hat(v)))

    def precondition(self, v):
        return self.to_nodal(self.to_hat(v) / self.precond_symbol)


def _rhs_hat(spec, i):
    d = spec.dimension
    b = spec.b_local.coefficients
    D = spec.D_local.coefficients
    ks = spec.b_local.wavenumbers()
    g = -b[i].copy()
    g[(0,) * d] += spec.b_bar_local[i]
    for a in range(d):
        g = g + 2j * np.pi * ks[a] * D[a, i]
    return g


def cell_operator_matrix(spec):
    """Dense Galerkin matrix on nodal values (for small oracle problems)."""
    op = _CellOperator(spec)
    n = op.M**op.d
    return np.column_stack([op.matvec(e) for e in np.eye(n)])


def solve_cell(spec, tol=1e-9, max_iter=500, restart=60, x0=None, validate=True):
    """Solve the ``d`` cell problems with right-preconditioned GMRES.

    The preconditioner is the inverse of the constant-coefficient operator
    ``-div(mean(D) grad)``. The true residual is recomputed after the
    iteration and the zero mean is imposed exactly.

    Raises
    ------
    CompatibilityError
        A right-hand side has nonzero torus mean.
    ConvergenceError
        GMRES did not reach ``tol`` within ``max_iter`` inner iterations.
    CoercivityError
        ``D`` is not symmetric or violates its declared bounds.
    """
    if validate:
        spec.validate()
    op = _CellOperator(spec)
    d, N = spec.dimension, spec.cutoff
    n = op.M**d
    zero = (0,) * d
    omegas, residuals, means, rhs_fields = [], [], [], []
    total_iter = 0
    A_right = LinearOperator((n, n), matvec=lambda z: op.matvec(op.precondition(z)), dtype=float)
    for i in range(d):
        g_hat = _rhs_hat(spec, i)
        g_field = tf.TorusField(g_hat, d, True)
        rhs_fields.append(g_field)
        compat = compatibility_residual(g_field)
        if compat > max(tol, 1e-12) * max(1.0, g_field.norm()):
            raise CompatibilityError(f"cell right-hand side {i} has mean {compat:.3e}")
        g_hat = np.array(g_hat)
        g_hat[zero] = 0.0
        g_norm = float(np.sqrt(np.sum(np.abs(g_hat) ** 2)))
        if g_norm <= 1e-15:
            w_hat = np.zeros(op.shape, dtype=complex)
            iters = 0
        else:
            g = op.to_nodal(g_hat)
            start = None
            if x0 is not None:
                w0 = op.to_hat(np.asarray(x0[i], dtype=float))
                start = op.to_nodal(w0 * op.precond_symbol)
            count = [0]

            def cb(_):
                count[0] += 1

            target = tol * max(1.0, g_norm)
            # residuals are measured in the nodal Euclidean norm, which is
            # sqrt(n) times the spectral norm
            z, _info = gmres(A_right, g, x0=start, rtol=0.0, atol=0.5 * target * np.sqrt(n),
                             restart=min(restart, n), maxiter=max(1, -(-max_iter // restart)),
                             callback=cb, callback_type="pr_norm")
            iters = count[0]
            w_hat = op.to_hat(op.precondition(z))
            w_hat[zero] = 0.0
        res = op.apply_hat(w_hat) - g_hat
        res[zero] = 0.0
        r = float(np.sqrt(np.sum(np.abs(res) ** 2)))
        if r > tol * max(1.0, g_norm):
            raise ConvergenceError(f"cell problem {i}: residual {r:.3e} after {iters} iterations")
        total_iter += iters
        # enforce a real field with exactly zero mean
        c = np.array(tf.transform(op.to_nodal(w_hat).reshape(op.shape), d, N).coefficients)
        c[zero] = 0.0
        omegas.append(tf.TorusField(c, d, True))
        residuals.append(r)
        means.append(abs(float(np.real(c[zero]))))
    return CellSolution(omegas, np.array(residuals), np.array(means), total_iter, tol, rhs_fields)


def solve_cell_flowrep(field, tau, X, b, D, cutoff, tol=1e-9, max_iter=500, coercivity=None, flow_tol=1e-11):
    """Cell problem for the flow representation at ``(tau, X)``.

    Coefficients are evaluated at ``x = Phi_tau(X)`` (exactly ``X`` when
    ``tau = 0``) with ``b_bar = b_bar(x)``.
    """
    X = np.asarray(X, dtype=float)
    x = X.copy() if tau == 0 else field.flow_map(X, tau, flow_tol)
    spec = CellProblemSpec.from_callables(b, D, x, cutoff, b_bar=field.b_bar(x.reshape(-1, 1))[:, 0],
                                          coercivity=coercivity, x_parameter=(float(tau), X), tolerance=tol)
    return solve_cell(spec, tol, max_iter), spec
