"""Periodic fields on the unit torus stored as truncated Fourier series.

The torus is ``[0, 1)^d`` and mode ``k`` carries the wavenumber ``2*pi*k``.
Coefficients are kept in FFT ordering on a ``(2N+1)^d`` lattice, so mode
``k`` lives at index ``k mod (2N+1)`` along each axis. Leading array axes
hold the field components (none for scalars, ``(d,)`` for vectors,
``(d, d)`` for matrices).
"""

from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, NotMeanZeroError, NotSolenoidalError

__all__ = [
    "TorusField",
    "HelmholtzPotential",
    "transform",
    "inverse_transform",
    "derivative",
    "gradient",
    "divergence",
    "curl",
    "mean",
    "helmholtz_potential",
    "nodal_grid",
    "embed_coefficients",
]


def _mode_indices(size, cutoff):
    """FFT-order positions of modes -N..N inside an array of length ``size``."""
    k = np.arange(-cutoff, cutoff + 1)
    return k % size, k % (2 * cutoff + 1)


def nodal_grid(n, dimension):
    """Uniform nodes ``j/n`` on the unit torus, shape ``(d, n, ..., n)``."""
    axis = np.arange(n) / n
    return np.stack(np.meshgrid(*([axis] * dimension), indexing="ij"))


def embed_coefficients(coefficients, dimension, size):
    """Zero-pad a ``(2N+1)^d`` FFT-ordered block into a ``size^d`` block."""
    m = coefficients.shape[-1]
    cutoff = (m - 1) // 2
    if size < m:
        raise AliasingError(f"grid of {size} points per axis cannot hold cutoff {cutoff}")
    comp = coefficients.shape[:-dimension] if dimension else ()
    out = np.zeros(comp + (size,) * dimension, dtype=complex)
    dst, src = _mode_indices(size, cutoff)
    index_dst = np.ix_(*([dst] * dimension))
    index_src = np.ix_(*([src] * dimension))
    lead = (Ellipsis,)
    out[lead + index_dst] = coefficients[lead + index_src]
    return out


def _truncate(spectrum, dimension, cutoff):
    size = spectrum.shape[-1]
    m = 2 * cutoff + 1
    comp = spectrum.shape[:-dimension]
    out = np.zeros(comp + (m,) * dimension, dtype=complex)
    src, dst = _mode_indices(size, cutoff)
    out[(Ellipsis,) + np.ix_(*([dst] * dimension))] = spectrum[(Ellipsis,) + np.ix_(*([src] * dimension))]
    return out


class TorusField:
    """Scalar, vector or matrix field on the unit torus.

    Parameters
    ----------
    coefficients : complex ndarray
        Shape ``component_shape + (2N+1,)*d`` in FFT ordering.
    dimension : int
        Torus dimension ``d``.
    real : bool
        Whether the field is real valued (Hermitian coefficients).
    """

    def __init__(self, coefficients, dimension, real=True):
        coefficients = np.asarray(coefficients, dtype=complex)
        if dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        grid_shape = coefficients.shape[coefficients.ndim - dimension:]
        if len(set(grid_shape)) != 1 or grid_shape[0] % 2 == 0:
            raise ValueError("coefficient lattice must be (2N+1)^d")
        self.coefficients = coefficients
        self.dimension = dimension
        self.real = bool(real)
        self.coefficients.setflags(write=False)

    @property
    def cutoff(self):
        return (self.coefficients.shape[-1] - 1) // 2

    @property
    def component_shape(self):
        return self.coefficients.shape[: self.coefficients.ndim - self.dimension]

    @property
    def rank(self):
        return {0: "scalar", 1: "vector", 2: "matrix"}[len(self.component_shape)]

    def wavenumbers(self):
        """Integer wavenumber arrays ``k_a`` broadcast over the lattice."""
        m = 2 * self.cutoff + 1
        k = np.fft.fftfreq(m, 1.0 / m).round().astype(int)
        return np.meshgrid(*([k] * self.dimension), indexing="ij")

    def __getitem__(self, index):
        return TorusField(self.coefficients[index], self.dimension, self.real)

    def __add__(self, other):
        if isinstance(other, TorusField):
            return TorusField(self.coefficients + other.coefficients, self.dimension, self.real and other.real)
        c = np.array(self.coefficients)
        c[(Ellipsis,) + (0,) * self.dimension] += other
        return TorusField(c, self.dimension, self.real and np.isrealobj(other))

    __radd__ = __add__

    def __neg__(self):
        return TorusField(-self.coefficients, self.dimension, self.real)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, TorusField):
            raise TypeError("use nodal products for field-field multiplication")
        return TorusField(self.coefficients * scalar, self.dimension, self.real and np.isrealobj(scalar))

    __rmul__ = __mul__

    def norm(self):
        """Spectral L2 norm, equal to the L2(T^d) norm by Parseval."""
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))

    def reality_residual(self):
        """Largest violation of ``c(-k) = conj(c(k))``."""
        axes = tuple(range(-self.dimension, 0))
        flipped = np.roll(np.flip(self.coefficients, axis=axes), 1, axis=axes)
        return float(np.max(np.abs(flipped - np.conj(self.coefficients)), initial=0.0))

    @classmethod
    def zeros(cls, dimension, cutoff, component_shape=()):
        return cls(np.zeros(tuple(component_shape) + (2 * cutoff + 1,) * dimension), dimension)

    @classmethod
    def from_function(cls, func, dimension, cutoff, grid=None):
        """Sample ``func(y)`` on a uniform grid and transform.

        ``func`` receives ``y`` of shape ``(d, n, ..., n)`` and returns an
        array of shape ``component_shape + (n,)*d``.
        """
        n = grid if grid is not None else 2 * cutoff + 1
        y = nodal_grid(n, dimension)
        values = np.asarray(func(y))
        if values.shape[values.ndim - dimension:] != (n,) * dimension:
            values = np.broadcast_to(values[(Ellipsis,) + (None,) * dimension],
                                     values.shape + (n,) * dimension)
        return transform(values, dimension, cutoff)


def transform(values, dimension, cutoff=None):
    """Nodal values on a uniform ``n^d`` grid to a :class:`TorusField`.

    ``values`` has shape ``component_shape + (n,)*d``. The cutoff defaults
    to the largest ``N`` with ``2N+1 <= n``.
    """
    values = np.asarray(values)
    n = values.shape[-1]
    if cutoff is None:
        cutoff = (n - 1) // 2
    if n < 2 * cutoff + 1:
        raise AliasingError(f"{n} nodes per axis under-resolve cutoff {cutoff}")
    axes = tuple(range(-dimension, 0))
    spectrum = np.fft.fftn(values, axes=axes) / n**dimension
    return TorusField(_truncate(spectrum, dimension, cutoff), dimension, real=np.isrealobj(values))


def inverse_transform(field, n=None):
    """Evaluate a field on the uniform ``n^d`` grid (default ``2N+1``)."""
    d = field.dimension
    if n is None:
        n = 2 * field.cutoff + 1
    spectrum = embed_coefficients(field.coefficients, d, n)
    values = np.fft.ifftn(spectrum, axes=tuple(range(-d, 0))) * n**d
    return values.real if field.real else values


def derivative(field, axis):
    """Spectral derivative along ``axis`` (multiplication by ``2*pi*i*k``)."""
    k = field.wavenumbers()[axis]
    return TorusField(field.coefficients * (2j * np.pi * k), field.dimension, field.real)


def gradient(field):
    """Gradient of a scalar field as a vector field."""
    if field.rank != "scalar":
        raise ValueError("gradient needs a scalar field")
    ks = field.wavenumbers()
    return TorusField(np.stack([field.coefficients * (2j * np.pi * k) for k in ks]), field.dimension, field.real)


def divergence(field):
    """Divergence of a vector field, or row-wise divergence of a matrix field."""
    d = field.dimension
    ks = field.wavenumbers()
    if field.rank == "vector":
        c = sum(field.coefficients[a] * (2j * np.pi * ks[a]) for a in range(d))
    elif field.rank == "matrix":
        # (div M)_i = sum_a d_a M_{a i}
        c = np.stack([sum(field.coefficients[a, i] * (2j * np.pi * ks[a]) for a in range(d)) for i in range(d)])
    else:
        raise ValueError("divergence needs a vector or matrix field")
    return TorusField(c, d, field.real)


def curl(field):
    """Curl of a three-dimensional vector field."""
    if field.dimension != 3 or field.rank != "vector":
        raise ValueError("curl is defined for 3D vector fields")
    k = [2j * np.pi * ka for ka in field.wavenumbers()]
    f = field.coefficients
    c = np.stack([k[1] * f[2] - k[2] * f[1], k[2] * f[0] - k[0] * f[2], k[0] * f[1] - k[1] * f[0]])
    return TorusField(c, 3, field.real)


def mean(field):
    """Torus mean, i.e. the zero-mode coefficient."""
    c = field.coefficients[(Ellipsis,) + (0,) * field.dimension]
    c = np.real(c) if field.real else c
    return c.item() if np.ndim(c) == 0 else np.array(c)


@dataclass(frozen=True)
class HelmholtzPotential:
    """Mean-zero vector potential ``upsilon`` with ``curl(upsilon) = F``."""

    upsilon: TorusField
    curl_residual: float
    mean_residual: float


def helmholtz_potential(F, tol=1e-10):
    """Vector potential of a solenoidal mean-zero field on the 3-torus.

    Uses ``U(k) = (2*pi*i*k x F(k)) / |2*pi*k|^2`` with the zero mode set to
    zero. ``curl_residual`` is relative to the spectral norm of ``F``.
    """
    if F.dimension != 3 or F.rank != "vector":
        raise ValueError("helmholtz_potential needs a 3D vector field")
    scale = max(F.norm(), 1.0)
    m = np.abs(F.coefficients[(Ellipsis, 0, 0, 0)])
    if np.max(m) > tol * scale:
        raise NotMeanZeroError(f"field mean {np.max(m):.3e} exceeds tolerance")
    div = divergence(F).norm()
    if div > tol * scale * 2 * np.pi * max(F.cutoff, 1):
        raise NotSolenoidalError(f"divergence norm {div:.3e} exceeds tolerance")
    ks = F.wavenumbers()
    q = [2j * np.pi * k for k in ks]
    k2 = sum((2 * np.pi * k) ** 2 for k in ks).astype(float)
    k2[0, 0, 0] = 1.0
    f = F.coefficients
    u = np.stack([q[1] * f[2] - q[2] * f[1], q[2] * f[0] - q[0] * f[2], q[0] * f[1] - q[1] * f[0]]) / k2
    u[:, 0, 0, 0] = 0.0
    upsilon = TorusField(u, 3, F.real)
    residual = (curl(upsilon) - F).norm() / max(F.norm(), np.finfo(float).tiny)
    if F.norm() == 0.0:
        residual = 0.0
    return HelmholtzPotential(upsilon, float(residual), float(np.max(np.abs(u[:, 0, 0, 0]))))
