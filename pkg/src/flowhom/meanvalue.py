"""Mean-value operator, Besicovitch seminorm and window-average diagnostics.

The mean of a signal is ``M(f) = lim (1/2l) int_{-l}^{l} f(tau) dtau``. For
declared classes (periodic, converging at infinity, trigonometric
polynomial) the limit is evaluated exactly; otherwise it is approximated on
a schedule of growing windows. Signals may be scalar, vector or matrix
valued; averages act entrywise.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ClassContractError, NonConvergentMeanError, ResolutionError, UnsupportedClassError

__all__ = [
    "TemporalSignal",
    "WindowSchedule",
    "MeanEstimate",
    "NonconvergenceReport",
    "default_schedule",
    "mean_value",
    "mean_value_exact",
    "window_average",
    "besicovitch_seminorm",
    "detect_nonconvergence",
    "piecewise_dyadic_average",
    "dyadic_coefficient",
    "dyadic_signal",
]

KINDS = ("periodic", "converging", "trig", "generic")


@dataclass(frozen=True)
class TemporalSignal:
    """A function of the fast time ``tau`` with a declared algebra class.

    ``evaluator`` accepts a 1-D array of times and returns an array whose
    leading axis runs over those times.

    Attributes
    ----------
    kind : {"periodic", "converging", "trig", "generic"}
    period : float, optional
        Period ``L`` for periodic signals.
    frequencies, cos_coefficients, sin_coefficients : arrays, optional
        Trigonometric polynomial ``sum a_j cos(w_j t) + b_j sin(w_j t)``.
    max_frequency : float, optional
        Highest angular frequency present; used for resolution checks.
    exact_window_average : callable, optional
        ``l -> (1/2l) int_{-l}^{l} f``, used instead of quadrature.
    """

    evaluator: Callable
    kind: str = "generic"
    period: Optional[float] = None
    frequencies: Optional[np.ndarray] = None
    cos_coefficients: Optional[np.ndarray] = None
    sin_coefficients: Optional[np.ndarray] = None
    max_frequency: Optional[float] = None
    exact_window_average: Optional[Callable] = None
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown signal class {self.kind!r}")
        if self.kind == "periodic" and not (self.period and self.period > 0):
            raise ValueError("periodic signals need a positive period")

    def __call__(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.asarray(self.evaluator(tau))

    @classmethod
    def periodic(cls, f, period, **kw):
        return cls(f, "periodic", period=float(period), **kw)

    @classmethod
    def converging(cls, f, **kw):
        return cls(f, "converging", **kw)

    @classmethod
    def generic(cls, f, **kw):
        return cls(f, "generic", **kw)

    @classmethod
    def trig(cls, frequencies, cos_coefficients, sin_coefficients=None):
        """Trigonometric polynomial with nonnegative angular frequencies."""
        w = np.asarray(frequencies, dtype=float)
        a = np.asarray(cos_coefficients, dtype=float)
        b = np.zeros_like(a) if sin_coefficients is None else np.asarray(sin_coefficients, dtype=float)
        if np.any(w < 0):
            raise ValueError("frequencies must be nonnegative")
        extra = (None,) * (a.ndim - 1)

        def evaluate(tau):
            phase = np.multiply.outer(tau, w)
            return (np.cos(phase)[(Ellipsis,) + extra] * a).sum(axis=1) + \
                   (np.sin(phase)[(Ellipsis,) + extra] * b).sum(axis=1)

        return cls(evaluate, "trig", frequencies=w, cos_coefficients=a, sin_coefficients=b,
                   max_frequency=float(w.max(initial=0.0)))

    def shifted(self, a):
        """The signal ``tau -> f(tau - a)`` with the same declared class."""
        f = self.evaluator
        if self.kind == "trig":
            w, ca, sb = self.frequencies, self.cos_coefficients, self.sin_coefficients
            extra = (slice(None),) + (None,) * (ca.ndim - 1)
            c, s = np.cos(w * a)[extra], np.sin(w * a)[extra]
            return TemporalSignal.trig(w, ca * c - sb * s, sb * c + ca * s)
        return TemporalSignal(lambda t: f(t - a), self.kind, period=self.period,
                              max_frequency=self.max_frequency, tolerance=self.tolerance)


@dataclass(frozen=True)
class WindowSchedule:
    """Increasing window half-widths and the quadrature density per unit time."""

    lengths: Sequence[float]
    quadrature_points_per_unit: int = 64

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float)
        if lengths.size == 0:
            raise ValueError("schedule must be nonempty")
        if np.any(lengths <= 0) or np.any(np.diff(lengths) <= 0):
            raise ValueError("window lengths must be positive and strictly increasing")
        if self.quadrature_points_per_unit < 1:
            raise ValueError("quadrature density must be positive")


def default_schedule(levels=8, base=10.0, points_per_unit=64):
    """Dyadic schedule ``l_k = base * 2^k`` for ``k < levels``."""
    return WindowSchedule([base * 2.0**k for k in range(levels)], points_per_unit)


@dataclass
class MeanEstimate:
    value: np.ndarray
    converged: bool
    trace: list = field(default_factory=list)
    tolerance_used: float = 0.0
    method: str = "window"


@dataclass
class NonconvergenceReport:
    flagged: bool
    estimates: list
    traces: list
    gap: float


def _check_resolution(signal, schedule):
    w = signal.max_frequency
    if w is None and signal.kind == "periodic":
        w = 2 * math.pi / signal.period
    if w is not None and w > 0:
        per_wavelength = schedule.quadrature_points_per_unit * 2 * math.pi / w
        if per_wavelength < 8:
            raise ResolutionError(
                f"{per_wavelength:.1f} points per wavelength; need at least 8 for frequency {w:g}")


def window_average(signal, length, points_per_unit=64):
    """``(1/2l) int_{-l}^{l} f`` by the trapezoid rule (or exactly if provided)."""
    if signal.exact_window_average is not None:
        return signal.exact_window_average(length)
    n = int(math.ceil(2 * length * points_per_unit)) + 1
    tau = np.linspace(-length, length, n)
    return np.trapezoid(signal(tau), tau, axis=0) / (2 * length)


def _to_value(v):
    v = np.asarray(v, dtype=float) if not isinstance(v, Fraction) else v
    return v


def _gap(a, b):
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def mean_value(signal, schedule=None, tol=1e-8, use_exact=True):
    """Estimate ``M(f)``.

    Declared classes use :func:`mean_value_exact` unless ``use_exact`` is
    false; generic signals (and the window path) record one trapezoid window
    average per schedule entry and are converged when the last two agree
    within ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if use_exact and signal.kind != "generic":
        value = mean_value_exact(signal)
        return MeanEstimate(np.asarray(value), True, [], tol, f"exact-{signal.kind}")
    schedule = schedule or default_schedule()
    _check_resolution(signal, schedule)
    trace = [(float(l), _to_value(window_average(signal, l, schedule.quadrature_points_per_unit)))
             for l in schedule.lengths]
    converged = len(trace) >= 2 and _gap(trace[-1][1], trace[-2][1]) <= tol
    return MeanEstimate(np.asarray(trace[-1][1], dtype=float), converged, trace, tol, "window")


def _gauss_periodic_mean(f, period, panels=64, order=10):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, period, panels + 1)
    h = period / panels
    nodes = (edges[:-1, None] + (x[None, :] + 1) * h / 2).ravel()
    weights = np.tile(w * h / 2, panels)
    values = np.asarray(f(nodes))
    return np.tensordot(weights, values, axes=(0, 0)) / period


def mean_value_exact(signal, levels=20, base=10.0):
    """Exact mean for declared classes.

    periodic: composite Gauss-Legendre over one period. converging: limits
    at ``+-base*2^k`` up to ``k = levels``; the two one-sided limits must
    agree. trig: the zero-frequency coefficient.
    """
    kind = signal.kind
    if kind == "periodic":
        return _gauss_periodic_mean(signal.evaluator, signal.period)
    if kind == "trig":
        zero = signal.frequencies == 0
        a = signal.cos_coefficients
        return a[zero].sum(axis=0) if np.any(zero) else np.zeros(a.shape[1:])
    if kind == "converging":
        tau = base * 2.0 ** np.arange(levels + 1)
        plus = signal(tau)
        minus = signal(-tau)
        scale = max(1.0, float(np.max(np.abs(plus[-1]))))
        tol = 1e-6 * scale
        for side, seq in (("+", plus), ("-", minus)):
            if _gap(seq[-1], seq[-2]) > tol:
                raise ClassContractError(f"signal does not settle as tau -> {side}inf")
        if _gap(plus[-1], minus[-1]) > tol:
            raise ClassContractError("limits at +inf and -inf differ; not converging at infinity")
        return 0.5 * (plus[-1] + minus[-1])
    raise UnsupportedClassError("generic signals have no exact mean; use mean_value with a schedule")


def besicovitch_seminorm(signal, schedule=None, tol=1e-8):
    """Square root of the limsup of window averages of ``|f|^2``."""
    def sq(tau):
        v = np.asarray(signal.evaluator(tau), dtype=float)
        return (v.reshape(v.shape[0], -1) ** 2).sum(axis=1)

    if signal.kind == "trig":
        w = signal.frequencies
        a = signal.cos_coefficients.reshape(len(w), -1)
        b = signal.sin_coefficients.reshape(len(w), -1)
        total = 0.0
        for freq in np.unique(w):
            sel = w == freq
            aa, bb = a[sel].sum(axis=0), b[sel].sum(axis=0)
            total += float(np.sum(aa**2)) if freq == 0 else 0.5 * float(np.sum(aa**2 + bb**2))
        return MeanEstimate(np.asarray(math.sqrt(total)), True, [], tol, "exact-trig")
    if signal.kind in ("periodic", "converging"):
        mf = TemporalSignal(sq, signal.kind, period=signal.period)
        return MeanEstimate(np.asarray(math.sqrt(max(float(mean_value_exact(mf)), 0.0))), True, [], tol,
                            f"exact-{signal.kind}")
    schedule = schedule or default_schedule()
    _check_resolution(signal, schedule)
    mf = TemporalSignal(sq, "generic", max_frequency=signal.max_frequency)
    trace = [(float(l), float(window_average(mf, l, schedule.quadrature_points_per_unit)))
             for l in schedule.lengths]
    tail = [t[1] for t in trace[-2:]]
    converged = len(trace) >= 2 and abs(tail[-1] - tail[0]) <= tol
    return MeanEstimate(np.asarray(math.sqrt(max(max(tail), 0.0))), converged, trace, tol, "window")


def detect_nonconvergence(signal, schedules, gap_tol=0.05):
    """Compare final window averages under several schedules.

    Flags non-convergence when any two final averages differ by more than
    ``gap_tol``.
    """
    if len(schedules) < 2:
        raise ValueError("need at least two schedules")
    estimates, traces = [], []
    for s in schedules:
        trace = [(l, window_average(signal, l, s.quadrature_points_per_unit)) for l in s.lengths]
        traces.append(trace)
        estimates.append(trace[-1][1])
    gap = max(_gap(a, b) for i, a in enumerate(estimates) for b in estimates[i + 1:])
    return NonconvergenceReport(gap > gap_tol, estimates, traces, gap)


def require_converged(estimate, what="mean value"):
    if not estimate.converged:
        raise NonConvergentMeanError(f"{what} did not converge: trace {estimate.trace[-3:]}")
    return estimate


# ----------------------------------------------------------------------------
# Piecewise dyadic coefficient


def _dyadic_ones_measure(l):
    """Measure of ``{x in [0, l] : D(x) = 1}`` as an exact rational."""
    l = Fraction(l)
    total = Fraction(0)
    n = 0
    while True:
        a = Fraction(2) ** ((2 * n) ** 2)
        if a >= l:
            break
        b = Fraction(2) ** ((2 * n + 1) ** 2)
        total += min(b, l) - a
        n += 1
    return total


def piecewise_dyadic_average(l):
    """Exact ``(1/2l) int_{-l}^{l} D`` for the dyadic coefficient.

    ``D(x) = 1`` when ``|x|`` lies in ``[2^{(2n)^2}, 2^{(2n+1)^2})`` for some
    ``n >= 0`` and ``D(x) = 2`` otherwise. The result is a ``Fraction``.
    """
    l = Fraction(l)
    if l <= 0:
        raise ValueError("l must be positive")
    return (2 * l - _dyadic_ones_measure(l)) / l


def dyadic_coefficient(x, low=1.0, high=2.0):
    """Vectorized dyadic coefficient (``low`` on the dyadic bands)."""
    a = np.abs(np.asarray(x, dtype=float))
    out = np.full(a.shape, float(high))
    n = 0
    while True:
        lo = 2.0 ** ((2 * n) ** 2)
        if lo > max(float(a.max(initial=0.0)), 1.0):
            break
        hi = 2.0 ** ((2 * n + 1) ** 2)
        out[(a >= lo) & (a < hi)] = low
        n += 1
    return out


def dyadic_signal():
    """``tau -> D(tau)`` with exact symmetric window averages."""
    return TemporalSignal(dyadic_coefficient, "generic",
                          exact_window_average=lambda l: piecewise_dyadic_average(Fraction(l)))
