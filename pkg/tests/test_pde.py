import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowhom import flows
from flowhom.errors import CFLError, CoercivityError, NotSolenoidalError
from flowhom.pde import (Box, EpsProblemSpec, HomProblemSpec, diffusion_matrix, gaussian, lagrangian_remap,
                         shear_reference, solve_eps, solve_homogenized, solve_perturbed_model, space_time_l2)
from oracles import heat_kernel

TWO_PI = 2 * np.pi


def identity_D(x, y):
    return np.broadcast_to(np.eye(x.shape[0]).reshape((x.shape[0],) * 2 + (1,) * (x.ndim - 1)),
                           (x.shape[0],) * 2 + x.shape[1:])


def zero_b(x, y):
    return np.zeros_like(x)


def _relative_l2(u, exact):
    return float(np.sqrt(np.sum((u - exact) ** 2) / np.sum(exact**2)))


def test_heat_kernel_reference():
    box = Box.from_spacing([-3, -3], [3, 3], 0.015)
    sol = solve_homogenized(HomProblemSpec(np.eye(2), gaussian([0.0, 0.0], 0.1), box, 0.1, n_frames=2,
                                           steps_per_frame=100))
    assert _relative_l2(sol.frames[-1], heat_kernel(box.centers(), 0.1, np.eye(2), 0.1)) <= 1e-4


def test_anisotropic_heat_kernel():
    box = Box.from_spacing([-3, -3], [3, 3], 0.015)
    D = np.array([[1.0, 0.2], [0.2, 0.5]])
    sol = solve_homogenized(HomProblemSpec(D, gaussian([0.0, 0.0], 0.1), box, 0.1, n_frames=2,
                                           steps_per_frame=100))
    assert _relative_l2(sol.frames[-1], heat_kernel(box.centers(), 0.1, D, 0.1)) <= 2e-4


def test_scalar_tensor_rescales_time():
    box = Box.from_spacing([-4], [4], 0.01)
    sol = solve_homogenized(HomProblemSpec(np.sqrt(3) * np.eye(1), gaussian([0.0], 0.1), box, 0.1, n_frames=2,
                                           steps_per_frame=200))
    exact = heat_kernel(box.centers(), np.sqrt(3) * 0.1, np.eye(1), 0.1)
    assert _relative_l2(sol.frames[-1], exact) <= 1e-4


def test_constant_drift_translates_heat_solution():
    box = Box.from_spacing([-3, -3], [3, 3], 0.015)
    b = lambda x, y: np.stack([0.5 + 0 * x[0], -0.25 + 0 * x[0]])  # noqa: E731
    sol = solve_eps(EpsProblemSpec(1.0, b, identity_D, gaussian([0.0, 0.0], 0.1), box, 0.1, n_frames=2))
    exact = heat_kernel(box.centers(), 0.1, np.eye(2), 0.1, center=[0.05, -0.025])
    assert _relative_l2(sol.frames[-1], exact) <= 1e-4


def test_diffusion_matrix_annihilates_constants_and_is_symmetric():
    box = Box((0.0, 0.0), (1.0, 2.0), (6, 5))
    rng = np.random.default_rng(3)
    K = np.einsum("ik...,jk...->ij...", *(2 * [rng.normal(size=(2, 2, 6, 5))])) + np.eye(2)[:, :, None, None]
    L = diffusion_matrix(K, box)
    assert np.max(np.abs(L @ np.ones(30))) < 1e-11
    assert np.max(np.abs(np.ones(30) @ L)) < 1e-11
    assert abs(L - L.T).max() < 1e-11
    # negative semidefinite
    assert np.linalg.eigvalsh(L.toarray()).max() < 1e-10


@given(st.floats(0.2, 1.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.0, 0.5))
def test_eps_solver_conserves_mass_and_dissipates(eps, b1, b2, amp):
    box = Box((0.0, 0.0), (1.0, 1.0), (16, 16))

    def b(x, y):
        return np.stack([b1 + 0.5 * np.cos(TWO_PI * y[1]), b2 + 0.5 * np.sin(TWO_PI * y[0])])

    def D(x, y):
        s = 1 + amp * np.sin(TWO_PI * y[0]) * np.cos(TWO_PI * y[1])
        return np.eye(2).reshape(2, 2, 1, 1) * s

    u0 = lambda x: 1 + np.sin(TWO_PI * x[0]) * np.cos(4 * np.pi * x[1])  # noqa: E731
    sol = solve_eps(EpsProblemSpec(eps, b, D, u0, box, 0.02, n_frames=2))
    assert sol.mass_drift() <= 1e-10
    assert sol.max_l2_increase() <= 1e-10


def test_cfl_error():
    box = Box((0.0, 0.0), (1.0, 1.0), (16, 16))
    b = lambda x, y: np.stack([np.ones_like(x[0]), np.zeros_like(x[0])])  # noqa: E731
    with pytest.raises(CFLError):
        solve_eps(EpsProblemSpec(0.1, b, identity_D, gaussian([0.5, 0.5], 0.01), box, 0.1, dt=0.1))


def test_compressible_field_rejected():
    box = Box((0.0, 0.0), (1.0, 1.0), (16, 16))
    b = lambda x, y: np.stack([np.sin(TWO_PI * x[0]), np.zeros_like(x[0])])  # noqa: E731
    with pytest.raises(NotSolenoidalError):
        solve_eps(EpsProblemSpec(0.5, b, identity_D, gaussian([0.5, 0.5], 0.01), box, 0.1))


def test_indefinite_diffusion_rejected():
    box = Box((0.0, 0.0), (1.0, 1.0), (8, 8))
    D = lambda x, y: -identity_D(x, y)  # noqa: E731
    with pytest.raises(CoercivityError):
        solve_eps(EpsProblemSpec(0.5, zero_b, D, gaussian([0.5, 0.5], 0.01), box, 0.1))


def test_pure_transport_remap_is_stationary():
    # u(t, x) = u0(x - b t / eps): in Lagrangian coordinates nothing moves
    box = Box((0.0, 0.0), (1.0, 1.0), (32, 32))
    b_star = np.array([1.0, 0.0])
    b = lambda x, y: np.stack([np.ones_like(x[0]), np.zeros_like(x[0])])  # noqa: E731
    D = lambda x, y: 1e-12 * identity_D(x, y)  # noqa: E731
    u0 = lambda x: np.sin(TWO_PI * x[0]) + 2  # noqa: E731
    sol = solve_eps(EpsProblemSpec(0.25, b, D, u0, box, 0.25, n_frames=3))
    v = lagrangian_remap(sol, flows.constant_drift(b_star))
    assert np.max(np.abs(v.frames[-1] - v.frames[0])) < 1e-2
    assert space_time_l2(v, v) == 0.0


def test_space_time_l2_needs_matching_times():
    box = Box((0.0,), (1.0,), (8,))
    a = solve_homogenized(HomProblemSpec(np.eye(1), np.ones(8), box, 0.1, n_frames=3))
    b = solve_homogenized(HomProblemSpec(np.eye(1), np.ones(8), box, 0.1, n_frames=4))
    with pytest.raises(ValueError):
        space_time_l2(a, b)


def test_shear_reference_limits():
    box = Box((-8.0, -8.0), (8.0, 8.0), (128, 128), wrap=False)
    u0 = gaussian([0.0, 0.0], 0.5)
    # without shear motion over zero time the reference is the initial data
    assert np.allclose(shear_reference(box, u0, 0.0, 1.0), u0(box.centers()), atol=1e-12)
    u = shear_reference(box, u0, 0.2, 1.0)
    assert abs(u.sum() * box.cell_volume - 1.0) < 1e-8


def test_perturbed_model_constant_shift():
    box = Box((0.0, 0.0), (1.0, 1.0), (16, 16))

    def h(x, y):
        return np.stack([0.8 + 0.6 * np.cos(TWO_PI * y[1]), 0.6 + 0.4 * np.sin(TWO_PI * y[0])])

    def D(x, y):
        return np.eye(2).reshape(2, 2, 1, 1) * (1 + 0.3 * np.sin(TWO_PI * y[0]) * np.cos(TWO_PI * y[1]))

    def h1(x, y):
        return np.stack([0.3 + 0.2 * np.sin(TWO_PI * y[1]), -0.2 + 0 * y[0]])

    u0 = lambda x: 1 + np.cos(TWO_PI * x[0])  # noqa: E731
    res = solve_perturbed_model(h, h1, D, 0.1, box, u0, 0.05, cutoff=8, h1_class="constant", n_frames=3)
    assert np.allclose(res.h_star, [0.8, 0.6], atol=1e-12)
    assert np.allclose(res.convective_field[0], 0.3, atol=1e-12)
    assert np.allclose(res.convective_field[1], -0.2, atol=1e-12)
    assert res.homogenized.mass_drift() < 1e-10
