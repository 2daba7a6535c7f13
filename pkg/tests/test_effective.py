import numpy as np
import pytest

from flowhom import flows
from flowhom.effective import (CellCache, coercivity_certificate, effective_tensor, refinement_error,
                               tabulate_tensor)
from flowhom.errors import UnboundedJacobianError
from flowhom.pde import lagrangian_effective_tensor
from oracles import classical_drift_tensor

TWO_PI = 2 * np.pi


def micro_b(b_star):
    bs = np.asarray(b_star, dtype=float)

    def b(x, y):
        return np.stack([bs[0] + 0.6 * np.cos(TWO_PI * y[1]), bs[1] + 0.4 * np.sin(TWO_PI * y[0])])
    return b


def trig_D(x, y):
    s = 1 + 0.3 * np.sin(TWO_PI * y[0]) * np.cos(TWO_PI * y[1])
    return np.eye(2).reshape(2, 2, 1, 1) * s


def test_constant_drift_matches_classical_tensor():
    T = effective_tensor(flows.constant_drift([0.8, 0.6]), np.zeros(2), micro_b([0.8, 0.6]), trig_D,
                         tau_class="constant", cutoff=16, tol=1e-11)
    assert np.allclose(T.D_eff, classical_drift_tensor((0.8, 0.6), 0.6, 0.4, 1.0, 0.3), atol=1e-10)
    assert T.jacobian_floor == pytest.approx(1.0)


def test_zero_mean_flow_is_classical():
    T = effective_tensor(flows.zero_field(2), np.zeros(2), micro_b([0.0, 0.0]), trig_D, tau_class="constant",
                         cutoff=16, tol=1e-11)
    assert np.allclose(T.D_eff, classical_drift_tensor((0.0, 0.0), 0.6, 0.4, 1.0, 0.3), atol=1e-10)


def test_rotation_lagrangian_average():
    D = lambda x: np.broadcast_to(np.diag([1.0, 2.0])[:, :, None], (2, 2, x.shape[1]))  # noqa: E731
    for X in ([0.0, 0.0], [1.3, -0.4]):
        T = lagrangian_effective_tensor(flows.rotation(), D, X, "periodic", TWO_PI)
        assert np.allclose(T.D_eff, 1.5 * np.eye(2), atol=1e-12)


def test_rotation_through_cell_problems():
    # constant b_bar(x) and D diag(1, 2): B = D at every node, so the cell route reduces to the Lagrangian one
    D = lambda x, y: np.broadcast_to(np.diag([1.0, 2.0]).reshape(2, 2, 1, 1), (2, 2) + y.shape[1:])  # noqa: E731
    field = flows.rotation()

    def b(x, y):
        v = field.b_bar(np.asarray(x).reshape(2, 1))[:, 0]
        return np.broadcast_to(v.reshape(2, 1, 1), y.shape)

    T = effective_tensor(field, np.array([0.5, 0.2]), b, D, tau_class="periodic", period=TWO_PI, nodes=16,
                         cutoff=4)
    assert np.allclose(T.D_eff, 1.5 * np.eye(2), atol=1e-12)


def test_asymptotic_drift_closed_form():
    field = flows.asymptotic_drift(1.0, 1.0, 1.0)
    D = lambda x: np.broadcast_to(np.eye(2)[:, :, None], (2, 2, x.shape[1]))  # noqa: E731
    for x1 in (-1.0, 0.0, 0.4, 2.0):
        s = 1 / np.cosh(x1) ** 2
        T = lagrangian_effective_tensor(field, D, [x1, 0.3], "converging")
        assert np.allclose(T.D_eff, [[1, s], [s, 1 + s * s]], atol=1e-10)


def test_converging_class_through_cell_problems():
    field = flows.asymptotic_drift(1.0, 1.0, 1.0)

    def b(x, y):
        v = field.b_bar(np.asarray(x).reshape(2, 1))[:, 0]
        return np.broadcast_to(v.reshape(2, 1, 1), y.shape)

    D = lambda x, y: np.broadcast_to(np.eye(2).reshape(2, 2, 1, 1), (2, 2) + y.shape[1:])  # noqa: E731
    s = 1 / np.cosh(0.4) ** 2
    T = effective_tensor(field, np.array([0.4, 0.0]), b, D, tau_class="converging", cutoff=2, tol=1e-9)
    assert np.allclose(T.D_eff, [[1, s], [s, 1 + s * s]], atol=1e-8)


def test_shear_is_rejected():
    D = lambda x, y: np.broadcast_to(np.eye(2).reshape(2, 2, 1, 1), (2, 2) + y.shape[1:])  # noqa: E731
    b = lambda x, y: np.broadcast_to(np.array([x[1], 0.0]).reshape(2, 1, 1), y.shape)  # noqa: E731
    with pytest.raises(UnboundedJacobianError):
        effective_tensor(flows.shear(), np.array([0.0, 1.0]), b, D, tau_class="generic", cutoff=2)


def test_cache_reuses_identical_cells():
    cache = CellCache()
    field = flows.constant_drift([0.8, 0.6])
    kw = dict(tau_class="periodic", period=1.0, nodes=4, cutoff=8, cache=cache)
    effective_tensor(field, np.zeros(2), micro_b([0.8, 0.6]), trig_D, **kw)
    assert cache.misses == 1 and cache.hits == 3
    effective_tensor(field, np.ones(2), micro_b([0.8, 0.6]), trig_D, **kw)
    assert len(cache) == 1


def test_coercivity_certificate():
    T = effective_tensor(flows.constant_drift([0.8, 0.6]), np.zeros(2), micro_b([0.8, 0.6]), trig_D,
                         tau_class="constant", cutoff=8)
    assert coercivity_certificate(T, 0.7).passed
    assert not coercivity_certificate(T, 2.0).passed


def test_tabulated_tensor_refinement():
    func = lambda X: np.array([[1 + 0.1 * np.sin(X[0]), 0.0], [0.0, 1.0 + 0.1 * X[1] ** 2]])  # noqa: E731
    err, fine = refinement_error(func, [0.0, 0.0], [1.0, 1.0], (9, 9))
    assert err < 1e-4
    table = tabulate_tensor(func, [0.0, 0.0], [1.0, 1.0], (9, 9))
    pts = np.array([[0.33, 0.71], [2.0, -1.0]])  # (d, n)
    vals = table(pts)
    assert vals.shape == (2, 2, 2)
    assert vals[0, 0, 0] == pytest.approx(1 + 0.1 * np.sin(0.33), abs=1e-5)
    assert vals[1, 1, 0] == pytest.approx(1.1, abs=1e-5)  # clamped to the table edge
    assert vals[1, 1, 1] == pytest.approx(1.0, abs=1e-5)
