import numpy as np
import pytest

from flowhom import flows
from flowhom.errors import CoverageError, ResolutionError, UnboundedJacobianError
from flowhom.meanvalue import TemporalSignal
from flowhom.pde import Box, GridSolution, gaussian, lagrangian_remap, solve_eps, solve_homogenized
from flowhom.scenarios import BUILTIN, Scenario, builtin, parse_config
from flowhom.sigma import (TestFunction, convergence_study, fit_order, oscillatory_decay_check, predicted_limit,
                           sigma_pairing, wendland_bump)

TWO_PI = 2 * np.pi
ONE = TemporalSignal.trig([0.0], [1.0])


def frames_solution(box, func, times, eps):
    """Solution object holding exact frames ``func(t, x)``."""
    x = box.centers()
    frames = [func(t, x) for t in times]
    mass = np.array([f.sum() * box.cell_volume for f in frames])
    l2 = np.array([np.sqrt((f * f).sum() * box.cell_volume) for f in frames])
    return GridSolution(box, np.asarray(times), frames, mass, l2, np.asarray(times), eps)


def periodic_h(X):
    return 1 + 0.5 * np.cos(TWO_PI * X[0]) + 0.25 * np.sin(TWO_PI * X[1])


def test_transported_solution_pairs_to_its_initial_data():
    # u(t, x) = u0(x - b t / eps) exactly, so the pairing reduces to int u0 h times int g
    b = np.array([0.8, 0.6])
    eps = 0.1
    box = Box((0.0, 0.0), (1.0, 1.0), (40, 40))
    u0 = lambda x: 1 + np.cos(TWO_PI * x[0]) * np.sin(TWO_PI * x[1]) + 0.3 * np.cos(TWO_PI * x[1])  # noqa: E731
    sol = frames_solution(box, lambda t, x: u0(x - b.reshape(2, 1, 1) * t / eps), np.linspace(0, 0.5, 11), eps)
    psi = TestFunction(lambda t: 1.0 + t, periodic_h, ONE, (0, 0))
    value = sigma_pairing(sol, psi, flows.constant_drift(b))
    # the Fourier modes of u0 and h only share the constant one, so int u0 h = 1
    assert value == pytest.approx(1.0 * np.trapezoid(1.0 + np.linspace(0, 0.5, 11), np.linspace(0, 0.5, 11)),
                                  abs=1e-8)


def test_slow_pairing_agrees_with_prediction_for_stationary_field():
    box = Box((0.0, 0.0), (1.0, 1.0), (32, 32))
    sol = frames_solution(box, lambda t, x: np.exp(-t) * (2 + np.cos(TWO_PI * x[0])), np.linspace(0, 1, 9), 0.1)
    psi = TestFunction(lambda t: 1.0, periodic_h, ONE, (0, 0))
    assert sigma_pairing(sol, psi, flows.zero_field(2)) == pytest.approx(predicted_limit(sol, psi), abs=1e-12)


def test_fast_modes_have_zero_limit():
    box = Box((0.0, 0.0), (1.0, 1.0), (8, 8))
    sol = frames_solution(box, lambda t, x: np.ones_like(x[0]), [0.0, 1.0], 0.1)
    psi = TestFunction(lambda t: 1.0, periodic_h, ONE, (1, 0))
    assert predicted_limit(sol, psi) == 0.0


def test_fast_time_factor_mean_enters_prediction():
    box = Box((0.0, 0.0), (1.0, 1.0), (8, 8))
    sol = frames_solution(box, lambda t, x: np.ones_like(x[0]), [0.0, 1.0], 0.1)
    wobble = TemporalSignal.trig([0.0, TWO_PI], [0.5, 1.0])
    psi = TestFunction(lambda t: 1.0, lambda X: np.ones_like(X[0]), wobble, (0, 0))
    assert predicted_limit(sol, psi) == pytest.approx(0.5, abs=1e-12)


def test_unresolved_oscillation_raises():
    box = Box((0.0, 0.0), (1.0, 1.0), (8, 8))
    sol = frames_solution(box, lambda t, x: np.ones_like(x[0]), [0.0, 1.0], 0.1)
    psi = TestFunction(lambda t: 1.0, periodic_h, ONE, (1, 0))
    with pytest.raises(ResolutionError):
        sigma_pairing(sol, psi, flows.zero_field(2))


def test_support_leaving_a_truncated_box_raises():
    box = Box((-1.0, -1.0), (1.0, 1.0), (20, 20), wrap=False)
    sol = frames_solution(box, lambda t, x: gaussian([0, 0], 0.05)(x), [0.0, 0.5, 1.0], 0.1)
    h, support = wendland_bump([0.0, 0.0], 0.3)
    psi = TestFunction(lambda t: 1.0, h, ONE, (0, 0), support)
    with pytest.raises(CoverageError):
        sigma_pairing(sol, psi, flows.constant_drift([1.0, 0.0]))
    # a slow drift keeps it inside
    sigma_pairing(sol, psi, flows.constant_drift([0.01, 0.0]))


def test_wendland_bump_is_compactly_supported():
    h, (lo, hi) = wendland_bump([0.5, -0.5], 0.2)
    assert h(np.array([[0.5], [-0.5]]))[0] == 1.0
    assert h(np.array([[0.71], [-0.5]]))[0] == 0.0
    assert np.allclose(lo, [0.3, -0.7]) and np.allclose(hi, [0.7, -0.3])


def test_decay_check_rejects_zero_mode_and_shear():
    h, support = wendland_bump([0.0, 0.0], 0.25)
    with pytest.raises(ValueError):
        oscillatory_decay_check(h, flows.zero_field(2), (0, 0), [0.1, 0.05, 0.025], support)
    with pytest.raises(UnboundedJacobianError):
        oscillatory_decay_check(h, flows.shear(), (1, 0), [0.1, 0.05, 0.025], support)


def test_fit_order_recovers_power_law():
    eps = np.array([0.4, 0.2, 0.1, 0.05])
    assert fit_order(eps, 3 * eps**2) == pytest.approx(2.0)
    assert np.isnan(fit_order(eps, [1.0, 0.0, 1.0, 1.0]))


def test_convergence_study_needs_three_values():
    with pytest.raises(ValueError):
        convergence_study(builtin("constant_drift"), eps_list=[0.2, 0.1])


# Below this absolute size a pairing gap is dominated by the solver's error on
# the fast scale, which stays fixed when cells per period are held fixed.
GAP_FLOOR = 1e-5
HOMOGENIZING = sorted(n for n in BUILTIN if builtin(n).expected_verdict == "homogenizes")


@pytest.mark.parametrize("name", ["constant_drift", "rotation", "asympt_constant"])
def test_validated_scenarios_converge(study, name):
    report, _ = study(name)
    assert report.verdict == "homogenizes" and not report.failures
    assert report.strictly_decreasing, report.errors


@pytest.mark.parametrize("name", HOMOGENIZING)
def test_pairing_gaps_shrink(study, name):
    report, _ = study(name)
    for label, gaps in report.pairing_gaps.items():
        known = [g for g in gaps if g is not None]
        if label != "fast_space":
            assert len(known) == len(gaps), f"{label} could not be evaluated"
        if all(g < GAP_FLOOR for g in known):
            continue
        assert all(a > b for a, b in zip(known, known[1:])), f"{label}: {known}"


def test_gap_floor_falls_with_resolution():
    def slow_gap(cells):
        text = BUILTIN["periodic_zero_mean"].replace("cells_per_period = 8", f"cells_per_period = {cells}")
        sc = Scenario(parse_config(text))
        sol = solve_eps(sc.eps_problem(0.2, n_frames=21))
        u0 = solve_homogenized(sc.hom_problem(sol.box, n_frames=21))
        psi = sc.battery()[0]
        return abs(sigma_pairing(sol, psi, sc.field, 0.2) - predicted_limit(u0, psi))

    assert "cells_per_period = 8" in BUILTIN["periodic_zero_mean"]
    coarse, fine = slow_gap(8), slow_gap(16)
    assert coarse < GAP_FLOOR and fine < 0.5 * coarse


def test_pairing_matches_remapped_inner_product():
    sc = builtin("constant_drift")
    sol = solve_eps(sc.eps_problem(0.2, n_frames=11))
    v = lagrangian_remap(sol, sc.field, 0.2)
    psi = TestFunction(lambda t: 1.0 + t, periodic_h, ONE, (0, 0))
    X = sol.box.centers()
    direct = np.trapezoid([np.sum(f * periodic_h(X)) * sol.box.cell_volume * (1.0 + t)
                           for t, f in zip(v.times, v.frames)], v.times)
    assert sigma_pairing(sol, psi, sc.field) == pytest.approx(direct, abs=1e-6)
