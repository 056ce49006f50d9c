import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srlmpc.errors import ValidationError
from srlmpc.qp import (INFEASIBLE, OPTIMAL, Multipliers, QpProblem, kkt_residuals, solve)

from oracles import projected_gradient_qp, random_qp


def test_box_clipped_optimum():
    # (z - 3)^2 = z^2 - 6z + 9
    p = QpProblem(H=[[2.0]], g=[-6.0], lb=[0.0], ub=[2.0], const=9.0)
    sol = solve(p)
    assert sol.status == OPTIMAL
    assert sol.z[0] == pytest.approx(2.0, abs=1e-12)
    assert sol.objective == pytest.approx(1.0, abs=1e-12)
    assert sol.residuals.max() <= 1e-10


def test_sum_to_one():
    sol = solve(QpProblem(H=np.eye(2), g=np.zeros(2), A_eq=[[1.0, 1.0]], b_eq=[1.0]))
    np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-12)


def test_stationarity_of_non_optimal_point():
    p = QpProblem(H=[[2.0]], g=[0.0])
    res = kkt_residuals(p, [0.7])
    assert res.stationarity == pytest.approx(1.4)
    assert res.primal == 0.0


def test_infeasible_is_reported():
    p = QpProblem(H=np.eye(2), g=np.zeros(2), A_in=[[1.0, 0.0], [-1.0, 0.0]], b_in=[-1.0, -1.0])
    sol = solve(p)
    assert sol.status == INFEASIBLE
    assert np.all(np.isnan(sol.z))


def test_infeasible_equalities():
    p = QpProblem(H=np.eye(2), g=np.zeros(2), A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[1.0, 2.0])
    assert solve(p).status == INFEASIBLE


def test_rejects_nonconvex():
    with pytest.raises(ValidationError):
        solve(QpProblem(H=np.diag([1.0, -1.0]), g=np.zeros(2)))


@pytest.mark.parametrize("kwargs", [
    dict(H=np.eye(2), g=np.zeros(3)),
    dict(H=np.eye(2), g=np.zeros(2), A_in=np.ones((1, 3)), b_in=[1.0]),
    dict(H=[[1.0, 2.0], [0.0, 1.0]], g=np.zeros(2)),
    dict(H=np.eye(1), g=[0.0], lb=[1.0], ub=[0.0]),
])
def test_rejects_bad_data(kwargs):
    with pytest.raises(ValidationError):
        QpProblem(**kwargs)


def test_semidefinite_lp_part():
    # min s subject to s >= |z - 1|, z in [2, 5]: a linear slack with zero curvature
    H = np.diag([1e-0, 0.0])
    p = QpProblem(H=H, g=[0.0, 1.0], A_in=[[1.0, -1.0], [-1.0, -1.0]], b_in=[1.0, -1.0],
                  lb=[2.0, 0.0], ub=[5.0, np.inf])
    sol = solve(p)
    assert sol.ok
    np.testing.assert_allclose(sol.z, [2.0, 1.0], atol=1e-9)
    assert sol.residuals.max() <= 1e-8


def test_redundant_equalities_are_tolerated():
    p = QpProblem(H=np.eye(2), g=[-1.0, -1.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0])
    sol = solve(p)
    assert sol.ok
    np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-10)


def test_oracle_instance_residuals():
    rng = np.random.default_rng(3)
    d = random_qp(rng)
    x, _ = projected_gradient_qp(**d)
    sol = solve(QpProblem(**d))
    np.testing.assert_allclose(sol.z, x, atol=1e-6)
    assert sol.residuals.max() <= 1e-6


def test_residuals_zero_at_true_kkt_point():
    p = QpProblem(H=[[2.0]], g=[-6.0], lb=[0.0], ub=[2.0])
    res = kkt_residuals(p, [2.0], Multipliers(np.zeros(0), np.zeros(0), np.zeros(1), np.array([2.0])))
    assert res.max() == 0.0


qp_seeds = st.integers(0, 2 ** 32 - 1)


@settings(max_examples=40, deadline=None)
@given(seed=qp_seeds, m_in=st.integers(0, 14), m_eq=st.integers(0, 3), box=st.booleans())
def test_random_kkt(seed, m_in, m_eq, box):
    rng = np.random.default_rng(seed)
    p = QpProblem(**random_qp(rng, n=8, m_in=m_in, m_eq=m_eq, box=box))
    sol = solve(p)
    assert sol.ok
    assert sol.residuals.max() <= 1e-8 * max(1.0, np.abs(p.g).max(), np.abs(p.H).max())


@settings(max_examples=25, deadline=None)
@given(seed=qp_seeds)
def test_local_optimality_probe(seed):
    rng = np.random.default_rng(seed)
    p = QpProblem(**random_qp(rng, n=6, m_in=4, m_eq=0, box=False))
    sol = solve(p)
    f = sol.objective
    hits = 0
    for _ in range(200):
        d = rng.standard_normal(p.n)
        z = sol.z + 1e-3 * d / np.linalg.norm(d)
        if np.all(p.A_in @ z <= p.b_in):
            hits += 1
            assert p.objective(z) >= f - 1e-6
        if hits >= 20:
            break


@settings(max_examples=25, deadline=None)
@given(seed=qp_seeds, c=st.floats(0.01, 100.0))
def test_scaling_invariance(seed, c):
    rng = np.random.default_rng(seed)
    d = random_qp(rng, n=6, m_in=5, m_eq=1)
    z1 = solve(QpProblem(**d)).z
    d["H"], d["g"] = c * d["H"], c * d["g"]
    z2 = solve(QpProblem(**d)).z
    np.testing.assert_allclose(z1, z2, atol=1e-7)


@settings(max_examples=25, deadline=None)
@given(seed=qp_seeds)
def test_feasibility_of_result(seed):
    rng = np.random.default_rng(seed)
    p = QpProblem(**random_qp(rng, n=7, m_in=10, m_eq=2))
    z = solve(p).z
    assert np.all(p.A_in @ z <= p.b_in + 1e-8)
    assert np.all(np.abs(p.A_eq @ z - p.b_eq) <= 1e-8)
    assert np.all((z >= p.lb - 1e-8) & (z <= p.ub + 1e-8))
