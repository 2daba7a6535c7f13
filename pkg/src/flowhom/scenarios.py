"""Scenario configuration, built-in scenarios and limit diagnosis.

A scenario is an INI document with the sections ``scenario``, ``mean_flow``,
``micro_field``, ``diffusion``, ``perturbation``, ``initial``, ``algebra``,
``sweep`` and ``diagnostics``. Unknown sections or keys and malformed values
raise :class:`ConfigError` with the offending line.
"""

import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from types import SimpleNamespace
from typing import Optional

import numpy as np

from . import flows
from .effective import effective_tensor, tabulate_tensor
from .errors import ClassContractError, ConfigError, NonConvergentMeanError, UnboundedJacobianError
from .meanvalue import (NonconvergenceReport, TemporalSignal, WindowSchedule, default_schedule,
                        detect_nonconvergence, dyadic_coefficient, dyadic_signal)
from .pde import Box, EpsProblemSpec, HomProblemSpec, convective_field, gaussian, lagrangian_effective_tensor
from .sigma import TestFunction, wendland_bump

__all__ = ["Scenario", "Diagnosis", "BUILTIN", "load_config", "parse_config", "builtin", "list_builtin"]

VERDICTS = ("homogenizes", "trivial_limit", "non_unique")
TAU_CLASSES = ("constant", "periodic", "converging", "generic")


def _floats(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return tuple(float(p) for p in parts)


def _ints(text):
    return tuple(int(p) for p in re.split(r"[,\s]+", text.strip()) if p)


def _matrix(text):
    rows = [_floats(r) for r in text.split(";") if r.strip()]
    if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
        raise ValueError("matrix must be square, rows separated by ';'")
    return tuple(rows)


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected a boolean")


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


SCHEMA = {
    "scenario": {"name": (str, None), "dimension": (int, None), "description": (str, ""),
                 "expected_verdict": (_choice(*VERDICTS), "homogenizes")},
    "mean_flow": {"kind": (_choice("zero", "constant", "linear", "rotation", "shear", "asymptotic"), "zero"),
                  "b_star": (_floats, None), "matrix": (_matrix, None), "omega": (float, 1.0),
                  "rate": (float, 1.0), "speed": (float, 1.0), "amplitude": (float, 1.0), "width": (float, 1.0)},
    "micro_field": {"kind": (_choice("none", "trig"), "none"), "amplitude": (_floats, (0.0, 0.0))},
    "diffusion": {"kind": (_choice("constant", "trig", "dyadic"), "constant"), "matrix": (_matrix, None),
                  "base": (float, 1.0), "amplitude": (float, 0.0), "low": (float, 1.0), "high": (float, 2.0)},
    "perturbation": {"kind": (_choice("none", "constant"), "none"), "vector": (_floats, None)},
    "initial": {"kind": (_choice("gaussian", "trig", "csv"), "gaussian"), "center": (_floats, None),
                "variance": (float, 1.0), "mass": (float, 1.0), "path": (str, None)},
    "algebra": {"tau_class": (_choice(*TAU_CLASSES), "constant"), "period": (float, None), "nodes": (int, 32)},
    "sweep": {"eps": (_floats, None), "final_time": (float, 0.1), "lower": (_floats, None),
              "upper": (_floats, None), "wrap": (_bool, True), "cells_per_period": (float, None),
              "spacing": (float, None), "cutoff": (int, 16), "n_frames": (int, 11), "tensor_grid": (_ints, None),
              "tol": (float, 1e-10)},
    "diagnostics": {"lower": (_floats, None), "upper": (_floats, None), "tau_max": (float, 100.0),
                    "samples": (int, 4)},
}
REQUIRED = {"scenario": ("name", "dimension"), "sweep": ("eps", "lower", "upper")}


def _locate(text):
    """Map ``(section, key)`` and ``(section, None)`` to ``(line, column)``."""
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.match(r"\s*\[([^\]]*)\]", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), (i, line.index("[") + 1))
            continue
        m = re.match(r"(\s*)([^=:\s]+)\s*[=:]", line)
        if m and section is not None:
            where.setdefault((section, m.group(2)), (i, len(m.group(1)) + 1))
    return where


def parse_config(text, source="<string>"):
    """Parse INI text into a nested dict of typed values with defaults filled."""
    where = _locate(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}", getattr(exc, "lineno", None), None) from exc
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            line, col = where.get((section, None), (None, None))
            raise ConfigError(f"{source}: unknown section [{section}]", line, col)
        for key, raw in cp.items(section):
            line, col = where.get((section, key), (None, None))
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]", line, col)
            parser = SCHEMA[section][key][0]
            try:
                value = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {section}.{key}: {exc}", line, col) from exc
            out.setdefault(section, {})[key] = value
    for section, keys in SCHEMA.items():
        sec = out.setdefault(section, {})
        for key, (_, default) in keys.items():
            sec.setdefault(key, default)
    for section, keys in REQUIRED.items():
        for key in keys:
            if out[section][key] is None:
                line, col = where.get((section, None), (None, None))
                raise ConfigError(f"{source}: missing required key {section}.{key}", line, col)
    return out


def load_config(source):
    """Scenario from a built-in name or an INI file path."""
    if isinstance(source, str) and source in BUILTIN:
        return Scenario(parse_config(BUILTIN[source], f"<builtin {source}>"))
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"no built-in scenario or file named {source!r}", None, None)
    return Scenario(parse_config(path.read_text(), str(path)), base_dir=path.parent)


def config_hash(config):
    """SHA-256 of the canonical JSON form of a parsed configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Diagnosis:
    verdict: str
    jacobian: object
    orbit: str
    class_consistent: bool
    nonconvergence: Optional[NonconvergenceReport] = None
    notes: str = ""


def _expand(x, like):
    """Reshape a point array ``(d, ...)`` so it broadcasts against ``like``."""
    x = np.asarray(x, dtype=float)
    extra = np.ndim(like) - x.ndim
    return x.reshape(x.shape + (1,) * extra) if extra > 0 else x


class Scenario:
    """A parsed scenario with coefficient callables and run builders.

    Coefficients ``b(x, y)`` and ``D(x, y)`` accept either a single point
    ``x`` of shape ``(d,)`` with a grid of ``y`` (cell-problem convention) or
    matched grids of ``x`` and ``y`` (solver convention).
    """

    def __init__(self, config, base_dir=None):
        self.config = config
        self.base_dir = Path(base_dir) if base_dir else Path(".")
        c = config
        self.name = c["scenario"]["name"]
        self.dimension = d = c["scenario"]["dimension"]
        self.expected_verdict = c["scenario"]["expected_verdict"]
        self.description = c["scenario"]["description"]
        self.tau_class = c["algebra"]["tau_class"]
        self.period = c["algebra"]["period"]
        if self.tau_class == "periodic" and not self.period:
            raise ConfigError("periodic algebra class needs algebra.period", None, None)
        s = c["sweep"]
        self.sweep = SimpleNamespace(eps=tuple(s["eps"]), T=s["final_time"], lower=tuple(s["lower"]),
                                     upper=tuple(s["upper"]), wrap=s["wrap"],
                                     cells_per_period=s["cells_per_period"], spacing=s["spacing"],
                                     cutoff=s["cutoff"], n_frames=s["n_frames"], tensor_grid=s["tensor_grid"],
                                     tol=s["tol"])
        if len(self.sweep.lower) != d or len(self.sweep.upper) != d:
            raise ConfigError("sweep box bounds must have one entry per dimension", None, None)
        if (self.sweep.cells_per_period is None) == (self.sweep.spacing is None):
            raise ConfigError("give exactly one of sweep.cells_per_period and sweep.spacing", None, None)
        self.field = self._build_field()
        self._micro = self._build_micro()
        self._check_dimension("diffusion", "matrix")
        self._check_dimension("perturbation", "vector")

    # -- construction -------------------------------------------------------

    def _check_dimension(self, section, key):
        v = self.config[section][key]
        if v is not None and len(v) != self.dimension:
            raise ConfigError(f"{section}.{key} has the wrong dimension", None, None)

    def _build_field(self):
        m, d = self.config["mean_flow"], self.dimension
        kind = m["kind"]
        if kind == "zero":
            return flows.zero_field(d)
        if kind == "constant":
            if m["b_star"] is None or len(m["b_star"]) != d:
                raise ConfigError("mean_flow.b_star must have one entry per dimension", None, None)
            return flows.constant_drift(m["b_star"])
        if kind == "linear":
            if m["matrix"] is None or len(m["matrix"]) != d:
                raise ConfigError("mean_flow.matrix must be d x d", None, None)
            return flows.linear_field(np.array(m["matrix"]), m["b_star"])
        if d != 2:
            raise ConfigError(f"mean flow {kind!r} is two dimensional", None, None)
        if kind == "rotation":
            return flows.rotation(m["omega"])
        if kind == "shear":
            return flows.shear(m["rate"])
        return flows.asymptotic_drift(m["speed"], m["amplitude"], m["width"])

    def _build_micro(self):
        m = self.config["micro_field"]
        if m["kind"] == "none":
            return None
        if self.dimension != 2 or len(m["amplitude"]) != 2:
            raise ConfigError("trigonometric micro field is two dimensional with two amplitudes", None, None)
        a, c = m["amplitude"]

        def micro(y):
            return np.stack([a * np.cos(2 * np.pi * y[1]), c * np.sin(2 * np.pi * y[0])])

        return micro

    # -- coefficients -------------------------------------------------------

    @property
    def has_micro(self):
        return self._micro is not None

    @property
    def diffusion_kind(self):
        return self.config["diffusion"]["kind"]

    def b(self, x, y):
        bx = self.field.b_bar(_expand(x, y))
        out = np.broadcast_to(bx, (self.dimension,) + np.shape(y)[1:])
        if self._micro is not None:
            out = out + self._micro(y)
        return np.array(out, dtype=float)

    def _base_matrix(self):
        m = self.config["diffusion"]["matrix"]
        return np.eye(self.dimension) if m is None else np.array(m, dtype=float)

    def D(self, x, y):
        dc, d = self.config["diffusion"], self.dimension
        grid = np.shape(y)[1:]
        M = self._base_matrix().reshape((d, d) + (1,) * len(grid))
        kind = dc["kind"]
        if kind == "constant":
            return np.array(np.broadcast_to(M, (d, d) + grid))
        if kind == "trig":
            wave = np.sin(2 * np.pi * y[0])
            if d > 1:
                wave = wave * np.cos(2 * np.pi * y[1])
            return M * (dc["base"] + dc["amplitude"] * wave)
        xx = np.broadcast_to(_expand(x, y)[0], grid)
        return M * dyadic_coefficient(xx, dc["low"], dc["high"])

    def D_lagrangian(self, x):
        """``D`` as a function of ``x`` alone (valid without y-dependence)."""
        return self.D(x, x)

    @property
    def coercivity(self):
        """Lower bound of the symmetric part of ``D`` over its range."""
        dc = self.config["diffusion"]
        lam = float(np.linalg.eigvalsh(0.5 * (self._base_matrix() + self._base_matrix().T)).min())
        if dc["kind"] == "trig":
            return lam * (dc["base"] - abs(dc["amplitude"]))
        if dc["kind"] == "dyadic":
            return lam * min(dc["low"], dc["high"])
        return lam

    def perturbation(self, x, y):
        v = np.asarray(self.config["perturbation"]["vector"], dtype=float)
        return np.broadcast_to(v.reshape((-1,) + (1,) * (np.ndim(x) - 1)), np.shape(x))

    @property
    def has_perturbation(self):
        return self.config["perturbation"]["kind"] != "none"

    def initial(self):
        ic, d = self.config["initial"], self.dimension
        if ic["kind"] == "gaussian":
            center = ic["center"] if ic["center"] is not None else (0.0,) * d
            return gaussian(center, ic["variance"], ic["mass"])
        if ic["kind"] == "trig":
            def u(x):
                return 1 + 0.5 * np.cos(2 * np.pi * x[0]) + 0.5 * np.sin(2 * np.pi * sum(x[a] for a in range(d)))
            return u
        from .io import read_grid_csv
        path = Path(ic["path"])
        if not path.is_absolute():
            path = self.base_dir / path
        return read_grid_csv(path)[1]

    # -- grids and problems ---------------------------------------------------

    def box(self, eps):
        s = self.sweep
        if s.spacing is not None:
            return Box.from_spacing(s.lower, s.upper, s.spacing, wrap=s.wrap)
        shape = []
        for lo, hi in zip(s.lower, s.upper):
            periods = (hi - lo) / eps
            if s.wrap and abs(periods - round(periods)) > 1e-9:
                raise ConfigError(f"torus length {hi - lo} is not a multiple of eps = {eps}", None, None)
            shape.append(int(round(periods * s.cells_per_period)))
        return Box(tuple(map(float, s.lower)), tuple(map(float, s.upper)), tuple(shape), s.wrap)

    def study_frames(self, eps_min):
        """Frames resolving a unit fast-time period with 16 samples."""
        return max(self.sweep.n_frames, int(math.ceil(16 * self.sweep.T / eps_min)) + 1)

    def eps_problem(self, eps, n_frames=None, T=None):
        box = self.box(eps)

        def b(x, y):
            out = self.b(x, y)
            if self.has_perturbation:
                out = out + eps * self.perturbation(x, y)
            return out

        return EpsProblemSpec(eps, b, self.D, self.initial(), box, T or self.sweep.T,
                              n_frames=n_frames or self.sweep.n_frames)

    def hom_problem(self, box, n_frames=None, T=None):
        verdict = self.diagnose().verdict
        if verdict == "trivial_limit":
            raise UnboundedJacobianError(f"{self.name}: the flow Jacobian grows; no homogenized problem")
        if verdict == "non_unique":
            raise NonConvergentMeanError(f"{self.name}: fast-time means do not converge; limit not unique")
        drift = None
        if self.has_perturbation:
            X = box.centers().reshape(self.dimension, -1)
            conv, _ = convective_field(self.perturbation, self.field.b_bar(np.zeros(self.dimension)), X,
                                       "constant", cutoff=4)
            drift = conv[:, 0] if np.allclose(conv, conv[:, :1]) else None
        return HomProblemSpec(self.effective_field(), self.initial(), box, T or self.sweep.T,
                              n_frames=n_frames or self.sweep.n_frames, drift=drift)

    # -- effective tensor -------------------------------------------------------

    @property
    def tensor_is_uniform(self):
        """True when the effective tensor cannot depend on the Lagrangian point."""
        kind = self.config["mean_flow"]["kind"]
        x_free = self.diffusion_kind != "dyadic"
        if kind in ("zero", "constant"):
            return x_free
        if kind in ("linear", "rotation"):
            return x_free and not self.has_micro and self.diffusion_kind == "constant"
        return False

    @property
    def needs_cell_problem(self):
        return self.has_micro or self.diffusion_kind == "trig"

    def effective_at(self, X, cache=None):
        """Effective tensor at the Lagrangian point ``X``."""
        X = np.asarray(X, dtype=float).reshape(self.dimension)
        if self.diagnose().verdict == "trivial_limit":
            raise UnboundedJacobianError(f"{self.name}: the flow Jacobian grows")
        nodes = self.config["algebra"]["nodes"]
        if self.needs_cell_problem:
            return effective_tensor(self.field, X, self.b, self.D, tau_class=self.tau_class, period=self.period,
                                    nodes=nodes, tol=self.sweep.tol, cutoff=self.sweep.cutoff, cache=cache)
        return lagrangian_effective_tensor(self.field, self.D_lagrangian, X, self.tau_class, self.period,
                                           nodes=nodes, tol=self.sweep.tol)

    @cached_property
    def _effective_field(self):
        lo, hi = np.array(self.sweep.lower), np.array(self.sweep.upper)
        if self.tensor_is_uniform:
            return np.asarray(self.effective_at(0.5 * (lo + hi)).D_eff)
        shape = self.sweep.tensor_grid or (9,) * self.dimension
        return tabulate_tensor(lambda X: self.effective_at(X).D_eff, lo, hi, shape)

    def effective_field(self):
        """Constant ``(d, d)`` tensor or a :class:`TabulatedTensor` over the sweep box."""
        return self._effective_field

    # -- diagnosis ----------------------------------------------------------------

    def _diagnostic_box(self):
        g = self.config["diagnostics"]
        lo = g["lower"] if g["lower"] is not None else self.sweep.lower
        hi = g["upper"] if g["upper"] is not None else self.sweep.upper
        return np.array(lo, dtype=float), np.array(hi, dtype=float)

    def _mean_signal(self, X):
        if self.diffusion_kind == "dyadic" and self.config["mean_flow"]["kind"] == "constant" \
                and self.dimension == 1 and not np.any(X):
            return dyadic_signal()

        def f(taus):
            taus = np.asarray(taus, dtype=float)
            x = self.field.flow_map(np.repeat(X.reshape(-1, 1), taus.size, axis=1), taus)
            J = self.field.jacobian_map(x, taus)
            return np.einsum("ikm,klm,jlm->mij", J, self.D_lagrangian(x), J)

        return TemporalSignal.generic(f)

    @cached_property
    def _diagnosis(self):
        g = self.config["diagnostics"]
        lo, hi = self._diagnostic_box()
        jb = flows.jacobian_bound_estimate(self.field, (lo, hi), g["tau_max"], g["samples"])
        X0 = 0.5 * (lo + hi)
        radius = 10 * max(1.0, float(np.linalg.norm(hi - lo)))
        orbit = flows.classify_orbit(self.field, X0, g["tau_max"], radius)
        allowed = {"bounded": ("constant", "periodic", "generic"),
                   "escaping": ("constant", "converging", "generic"),
                   "undetermined": TAU_CLASSES}[orbit]
        consistent = self.tau_class in allowed
        if jb.growth:
            return Diagnosis("trivial_limit", jb, orbit, consistent, None, "Jacobian norm grows with tau")
        report = None
        if self.tau_class == "generic":
            signal = self._mean_signal(X0)
            if signal.exact_window_average is not None:
                schedules = [WindowSchedule([2.0 ** ((2 * n + 1) ** 2) for n in range(3)]),
                             WindowSchedule([2.0 ** ((2 * n) ** 2) for n in range(1, 4)])]
            else:
                schedules = [default_schedule(8, 10.0), default_schedule(8, 15.0)]
            report = detect_nonconvergence(signal, schedules)
            if report.flagged:
                return Diagnosis("non_unique", jb, orbit, consistent, report, "window averages disagree")
        return Diagnosis("homogenizes", jb, orbit, consistent, report, "")

    def diagnose(self, strict=False):
        """Verdict from the Jacobian growth and mean-value diagnostics.

        With ``strict`` an algebra class inconsistent with the orbit label
        raises :class:`ClassContractError`.
        """
        diag = self._diagnosis
        if strict and not diag.class_consistent:
            raise ClassContractError(f"{self.name}: class {self.tau_class!r} inconsistent with a "
                                     f"{diag.orbit} orbit")
        return diag

    # -- test-function battery --------------------------------------------------------

    def battery(self):
        """Separable test functions ``g h f cos(2 pi n . y)`` for pairing checks."""
        d = self.dimension
        lo, hi = np.array(self.sweep.lower), np.array(self.sweep.upper)
        if self.sweep.wrap:
            L = hi - lo

            def h(X):
                return 1 + 0.5 * np.cos(2 * np.pi * (X[0] - lo[0]) / L[0])

            support = None
        else:
            ic = self.config["initial"]
            center = np.array(ic["center"]) if ic["center"] is not None else 0.5 * (lo + hi)
            h, support = wendland_bump(center, 0.25 * float(np.min(hi - lo)))
        one = TemporalSignal.trig([0.0], [1.0])
        wobble = TemporalSignal.trig([0.0, 2 * np.pi], [1.0, 1.0])
        e1 = (1,) + (0,) * (d - 1)
        zero = (0,) * d

        def g(t):
            return 1.0

        return [TestFunction(g, h, one, zero, support, "slow"),
                TestFunction(g, h, wobble, zero, support, "fast_time"),
                TestFunction(g, h, one, e1, support, "fast_space")]

    def summary(self):
        return {"name": self.name, "dimension": self.dimension, "expected_verdict": self.expected_verdict,
                "tau_class": self.tau_class, "description": self.description}


BUILTIN = {
    "constant_drift": """
[scenario]
name = constant_drift
dimension = 2
description = constant mean drift with a periodic micro field and periodic diffusion on the unit torus
expected_verdict = homogenizes

[mean_flow]
kind = constant
b_star = 0.8, 0.6

[micro_field]
kind = trig
amplitude = 0.6, 0.4

[diffusion]
kind = trig
base = 1.0
amplitude = 0.3

[initial]
kind = trig

[algebra]
tau_class = constant

[sweep]
eps = 0.2, 0.1, 0.05
final_time = 0.1
lower = 0, 0
upper = 1, 1
wrap = true
cells_per_period = 8
cutoff = 16
tol = 1e-11
""",
    "rotation": """
[scenario]
name = rotation
dimension = 2
description = rigid rotation with periodic diffusion; the effective tensor depends on the Lagrangian point
expected_verdict = homogenizes

[mean_flow]
kind = rotation
omega = 1.0

[diffusion]
kind = trig
base = 1.0
amplitude = 0.3

[initial]
kind = gaussian
center = 0.5, 0.0
variance = 0.04

[algebra]
tau_class = periodic
period = 6.283185307179586
nodes = 8

[sweep]
eps = 0.2, 0.1, 0.05
final_time = 0.02
lower = -1.5, -1.5
upper = 1.5, 1.5
wrap = false
cells_per_period = 8
cutoff = 8
tensor_grid = 5, 5
tol = 1e-9

[diagnostics]
lower = -1, -1
upper = 1, 1
""",
    "asympt_constant": """
[scenario]
name = asympt_constant
dimension = 2
description = drift with a localized transverse jet; Jacobians converge as tau goes to plus or minus infinity
expected_verdict = homogenizes

[mean_flow]
kind = asymptotic
speed = 1.0
amplitude = 1.0
width = 1.0

[diffusion]
kind = constant
matrix = 1, 0; 0, 1

[initial]
kind = gaussian
center = 0, 0
variance = 0.1

[algebra]
tau_class = converging

[sweep]
eps = 0.2, 0.1, 0.05
final_time = 0.1
lower = -4, -4
upper = 6, 6
wrap = false
spacing = 0.05
tensor_grid = 81, 4

[diagnostics]
lower = -2, -2
upper = 2, 2
""",
    "shear": """
[scenario]
name = shear
dimension = 2
description = linear shear; Jacobians grow linearly and the solution dissipates to zero
expected_verdict = trivial_limit

[mean_flow]
kind = shear
rate = 1.0

[diffusion]
kind = constant

[initial]
kind = gaussian
center = 0, 0
variance = 0.5

[algebra]
tau_class = generic

[sweep]
eps = 0.4, 0.2, 0.1
final_time = 0.5
lower = -40, -8
upper = 40, 8
wrap = false
spacing = 0.1

[diagnostics]
lower = -1, -1
upper = 1, 1
""",
    "dyadic_nonunique": """
[scenario]
name = dyadic_nonunique
dimension = 1
description = unit drift through a dyadic coefficient whose window averages oscillate between 1 and 2
expected_verdict = non_unique

[mean_flow]
kind = constant
b_star = 1.0

[diffusion]
kind = dyadic
low = 1.0
high = 2.0

[initial]
kind = gaussian
center = 0
variance = 1.0

[algebra]
tau_class = generic

[sweep]
eps = 0.0625, 0.001953125
final_time = 1.0
lower = -20
upper = 540
wrap = false
spacing = 0.1
n_frames = 2

[diagnostics]
lower = 0
upper = 0
tau_max = 20
samples = 1
""",
    "perturbed_eps": """
[scenario]
name = perturbed_eps
dimension = 2
description = periodic velocity plus an order-eps perturbation giving a homogenized drift
expected_verdict = homogenizes

[mean_flow]
kind = constant
b_star = 0.8, 0.6

[micro_field]
kind = trig
amplitude = 0.6, 0.4

[diffusion]
kind = trig
base = 1.0
amplitude = 0.3

[perturbation]
kind = constant
vector = 0.3, -0.2

[initial]
kind = trig

[algebra]
tau_class = constant

[sweep]
eps = 0.2, 0.1, 0.05
final_time = 0.1
lower = 0, 0
upper = 1, 1
wrap = true
cells_per_period = 8
cutoff = 16
tol = 1e-11
""",
    "lagrangian_only": """
[scenario]
name = lagrangian_only
dimension = 2
description = rotation with anisotropic constant diffusion; the limit averages the rotated tensor
expected_verdict = homogenizes

[mean_flow]
kind = rotation
omega = 1.0

[diffusion]
kind = constant
matrix = 1, 0; 0, 2

[initial]
kind = gaussian
center = 0.8, 0
variance = 0.1

[algebra]
tau_class = periodic
period = 6.283185307179586
nodes = 32

[sweep]
eps = 0.2, 0.1, 0.05
final_time = 0.2
lower = -3, -3
upper = 3, 3
wrap = false
spacing = 0.04

[diagnostics]
lower = -1, -1
upper = 1, 1
""",
    "periodic_zero_mean": """
[scenario]
name = periodic_zero_mean
dimension = 2
description = classical periodic homogenization with a mean-free periodic velocity
expected_verdict = homogenizes

[mean_flow]
kind = zero

[micro_field]
kind = trig
amplitude = 0.6, 0.4

[diffusion]
kind = trig
base = 1.0
amplitude = 0.3

[initial]
kind = trig

[algebra]
tau_class = constant

[sweep]
eps = 0.2, 0.1, 0.05
final_time = 0.1
lower = 0, 0
upper = 1, 1
wrap = true
cells_per_period = 8
cutoff = 16
tol = 1e-11
""",
}


def builtin(name):
    if name not in BUILTIN:
        raise ConfigError(f"unknown built-in scenario {name!r}", None, None)
    return load_config(name)


def list_builtin():
    return sorted(BUILTIN)
