"""One test per acceptance criterion; each prints a PASS/FAIL line with its numbers."""

import time
from fractions import Fraction

import numpy as np
import pytest

from flowhom import flows
from flowhom.cell import CellProblemSpec, solve_cell
from flowhom.effective import assemble_B, coercivity_certificate
from flowhom.meanvalue import piecewise_dyadic_average
from flowhom.pde import (Box, EpsProblemSpec, lagrangian_effective_tensor, shear_reference, solve_eps,
                         solve_homogenized, solve_perturbed_model)
from flowhom.scenarios import BUILTIN, builtin
from flowhom.sigma import nonuniqueness_study, oscillatory_decay_check, wendland_bump
from oracles import classical_drift_tensor, dyadic_average_by_intervals

TWO_PI = 2 * np.pi
HOMOGENIZING = sorted(n for n in BUILTIN if builtin(n).expected_verdict == "homogenizes")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


@pytest.fixture(scope="module")
def drift_study(study):
    return study("constant_drift", [0.2, 0.1, 0.05])


@pytest.fixture(scope="module")
def shear_study(study):
    return study("shear", [0.4, 0.2, 0.1])


def test_criterion_01_harmonic_mean(record_criterion):
    with Timer() as clock:
        spec = CellProblemSpec.from_callables(lambda x, y: np.zeros_like(y),
                                              lambda x, y: (2 + np.sin(TWO_PI * y[0]))[None, None],
                                              np.zeros(1), 32)
        value = assemble_B(solve_cell(spec, 1e-12), spec).values[0, 0]
    err = abs(value - np.sqrt(3.0))
    ok = err <= 1e-6 and clock.seconds < 1.0
    assert record_criterion(1, ok, f"|B - sqrt(3)| = {err:.2e}, {clock.seconds:.2f} s")


def test_criterion_02_trivial_corrector(record_criterion):
    b = lambda x, y: np.broadcast_to(np.array([0.7, -1.3]).reshape(2, 1, 1), y.shape)  # noqa: E731
    cases = {
        "constant D": (lambda x, y: np.broadcast_to(np.array([[1.5, 0.2], [0.2, 0.8]]).reshape(2, 2, 1, 1),
                                                    (2, 2) + y.shape[1:]), np.array([[1.5, 0.2], [0.2, 0.8]])),
        "diag(1 + 0.5 sin, 1 + 0.5 sin)": (
            lambda x, y: np.stack([np.stack([1 + 0.5 * np.sin(TWO_PI * y[1]), 0 * y[0]]),
                                   np.stack([0 * y[0], 1 + 0.5 * np.sin(TWO_PI * y[0])])]), np.eye(2)),
    }
    worst_w, worst_B = 0.0, 0.0
    with Timer() as clock:
        for D, mean_D in cases.values():
            spec = CellProblemSpec.from_callables(b, D, np.zeros(2), 8)
            cell = solve_cell(spec, 1e-12)
            worst_w = max(worst_w, max(w.norm() for w in cell.omegas))
            worst_B = max(worst_B, float(np.max(np.abs(assemble_B(cell, spec).values - mean_D))))
    ok = worst_w <= 1e-10 and worst_B <= 1e-9 and clock.seconds < 1.0
    assert record_criterion(2, ok, f"max |omega| = {worst_w:.1e}, max |B - int D| = {worst_B:.1e}, "
                                   f"{clock.seconds:.2f} s")


def test_criterion_03_coercivity(record_criterion):
    margins = {}
    with Timer() as clock:
        for name in HOMOGENIZING:
            sc = builtin(name)
            lo, hi = sc._diagnostic_box()
            worst = np.inf
            for frac in (0.25, 0.5, 0.75):
                T = sc.effective_at(lo + frac * (hi - lo))
                cert = coercivity_certificate(T, sc.coercivity)
                assert cert.passed, f"{name}: margin {cert.margin:.3e}"
                worst = min(worst, cert.margin)
            margins[name] = worst
    ok = clock.seconds < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in margins.items())
    assert record_criterion(3, ok, f"smallest margins: {detail}; {clock.seconds:.1f} s")


def test_criterion_04_flow_identities(record_criterion):
    rng = np.random.default_rng(2024)
    worst_t, worst_det = 0.0, 0.0
    with Timer() as clock:
        for name in sorted(BUILTIN):
            sc = builtin(name)
            lo, hi = sc._diagnostic_box()
            d = sc.dimension
            x = lo[:, None] + (hi - lo)[:, None] * rng.random((d, 100))
            tau = rng.uniform(-50, 50, 100)
            worst_t = max(worst_t, flows.transport_identity_residual(sc.field, x, tau, tol=1e-11))
            J = flows.jacobian(sc.field, x, tau, tol=1e-11)
            det = np.linalg.det(np.moveaxis(J, 2, 0))
            worst_det = max(worst_det, float(np.max(np.abs(det - 1))))
    ok = worst_t <= 1e-8 and worst_det <= 1e-8 and clock.seconds < 10
    assert record_criterion(4, ok, f"transport residual {worst_t:.1e}, |det J - 1| {worst_det:.1e} over "
                                   f"{len(BUILTIN)} scenarios x 100 samples, {clock.seconds:.1f} s")


def test_criterion_05_oscillatory_decay(record_criterion):
    h, support = wendland_bump([0.1, -0.2], 0.25)
    fields = {"identity": flows.zero_field(2), "constant drift": flows.constant_drift([0.8, 0.6]),
              "rotation": flows.rotation()}
    orders = {}
    with Timer() as clock:
        for label, field in fields.items():
            table = oscillatory_decay_check(h, field, (1, 0), [0.1, 0.05, 0.025], support)
            orders[label] = table.order
    ok = min(orders.values()) >= 0.9 and clock.seconds < 120
    detail = ", ".join(f"{k} {v:.2f}" for k, v in orders.items())
    assert record_criterion(5, ok, f"decay orders: {detail}; {clock.seconds:.1f} s")


def test_criterion_06_shear_counterexample(record_criterion, shear_study):
    sc = builtin("shear")
    box = Box.from_spacing([-15, -8], [15, 8], 0.05, wrap=False)
    rel = {}
    with Timer() as clock:
        for eps in (1.0, 0.5):
            sol = solve_eps(EpsProblemSpec(eps, sc.b, sc.D, sc.initial(), box, 0.5, n_frames=2))
            ref = shear_reference(box, sc.initial(), 0.5, eps)
            rel[eps] = float(np.sqrt(np.sum((sol.frames[-1] - ref) ** 2) / np.sum(ref**2)))
    report, study_seconds = shear_study
    norms, grads = report.errors, report.extra["grad_x1"]
    a = max(rel.values()) <= 1e-3
    b = None not in norms and all(x > y for x, y in zip(norms, norms[1:]))
    c = len(grads) == 3 and all(x > y for x, y in zip(grads, grads[1:]))
    total = clock.seconds + study_seconds
    ok = a and b and c and total < 600
    assert record_criterion(6, ok, f"(a) rel L2 {rel[1.0]:.1e}, {rel[0.5]:.1e}; (b) ||u(T)|| "
                                   f"{', '.join(f'{v:.4f}' for v in norms)}; (c) ||d_X1 v|| "
                                   f"{', '.join(f'{v:.4f}' for v in grads)}; {total:.0f} s")


def test_criterion_07_dyadic_counterexample(record_criterion):
    with Timer() as clock:
        a16, a2 = piecewise_dyadic_average(16), piecewise_dyadic_average(2)
        exact = a16 == Fraction(31, 16) and a2 == Fraction(3, 2)
        oracle = abs(float(a16) - dyadic_average_by_intervals(16)) < 1e-15 and \
            abs(float(a2) - dyadic_average_by_intervals(2)) < 1e-15
        bound = all(abs(piecewise_dyadic_average(2 ** ((2 * n) ** 2)) - 2) <= Fraction(2) ** (1 - 4 * n)
                    for n in (1, 2))
        study = nonuniqueness_study()
    fine, coarse = study["branches"]
    order = fine["distance_to_1"] < fine["distance_to_2"] and coarse["distance_to_2"] < coarse["distance_to_1"]
    no_fallback = fine["fallback"] is None and coarse["fallback"] is None
    ok = exact and oracle and bound and order and no_fallback and clock.seconds < 300
    assert record_criterion(7, ok, f"averages {a16}, {a2}; eps 2^-9 distances to (1, 2) = "
                                   f"({fine['distance_to_1']:.4f}, {fine['distance_to_2']:.4f}); eps 2^-4 = "
                                   f"({coarse['distance_to_1']:.4f}, {coarse['distance_to_2']:.4f}); "
                                   f"{clock.seconds:.0f} s")


def test_criterion_08_homogenization_convergence(record_criterion, drift_study):
    report, seconds = drift_study
    sc = builtin("constant_drift")
    resolved = all(float(np.max(sc.box(eps).spacing)) <= eps / 8 + 1e-12 for eps in report.epsilon)
    oracle = classical_drift_tensor((0.8, 0.6), 0.6, 0.4, 1.0, 0.3)
    gap = float(np.max(np.abs(np.asarray(sc.effective_field()) - oracle)))
    ok = report.strictly_decreasing and report.order >= 0.7 and gap <= 1e-6 and resolved and seconds < 1800
    errs = ", ".join(f"{e:.3e}" for e in report.errors)
    assert record_criterion(8, ok, f"errors {errs}, order {report.order:.2f}, tensor gap {gap:.1e}, "
                                   f"{seconds:.0f} s")


def test_criterion_09_lagrangian_tensor(record_criterion):
    D = lambda x: np.broadcast_to(np.diag([1.0, 2.0])[:, :, None], (2, 2, x.shape[1]))  # noqa: E731
    with Timer() as clock:
        T = lagrangian_effective_tensor(flows.rotation(), D, [0.7, -0.3], "periodic", TWO_PI)
    err = float(np.max(np.abs(T.D_eff - 1.5 * np.eye(2))))
    ok = err <= 1e-8 and clock.seconds < 1.0
    assert record_criterion(9, ok, f"|D_eff - 1.5 I| = {err:.1e}, {clock.seconds:.2f} s")


def test_criterion_10_perturbed_model(record_criterion):
    sc = builtin("constant_drift")
    box = sc.box(0.2)
    c = np.array([0.3, -0.2])
    zero = lambda x, y: np.zeros_like(x)  # noqa: E731
    const = lambda x, y: np.broadcast_to(c.reshape(2, 1), x.shape)  # noqa: E731
    kw = dict(cutoff=sc.sweep.cutoff, h1_class="constant", n_frames=3, tol=sc.sweep.tol)
    with Timer() as clock:
        r0 = solve_perturbed_model(sc.b, zero, sc.D, 0.2, box, sc.initial(), 0.05, **kw)
        rc = solve_perturbed_model(sc.b, const, sc.D, 0.2, box, sc.initial(), 0.05, **kw)
    reference = np.asarray(sc.effective_field())
    same_as_8 = float(np.max(np.abs(r0.tensor.D_eff - reference)))
    unchanged = float(np.max(np.abs(rc.tensor.D_eff - r0.tensor.D_eff)))
    shift = float(np.max(np.abs(rc.convective_field - r0.convective_field - c.reshape(2, 1, 1))))
    ok = max(same_as_8, unchanged, shift) <= 1e-10 and clock.seconds < 300
    assert record_criterion(10, ok, f"tensor vs unperturbed {same_as_8:.1e}, tensor change {unchanged:.1e}, "
                                    f"field shift error {shift:.1e}, {clock.seconds:.1f} s")


def test_criterion_11_solver_invariants(record_criterion, drift_study, shear_study):
    worst_mass, worst_l2, runs = 0.0, 0.0, 0
    for name in sorted(BUILTIN):
        sc = builtin(name)
        eps = max(sc.sweep.eps)
        sol = solve_eps(sc.eps_problem(eps))
        sols = [sol]
        if sc.diagnose().verdict == "homogenizes":
            sols.append(solve_homogenized(sc.hom_problem(sol.box)))
        for s in sols:
            worst_mass = max(worst_mass, s.mass_drift())
            worst_l2 = max(worst_l2, s.max_l2_increase())
            runs += 1
    for report, _ in (drift_study, shear_study):
        worst_mass = max([worst_mass] + report.extra["mass_drift"])
        worst_l2 = max([worst_l2] + report.extra["l2_increase"])
        runs += len(report.extra["mass_drift"])
    ok = worst_mass <= 1e-10 and worst_l2 <= 1e-10
    assert record_criterion(11, ok, f"{runs} runs: max relative mass drift {worst_mass:.1e}, "
                                    f"max relative L2 increase per step {worst_l2:.1e}")
