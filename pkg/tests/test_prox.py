import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    box_clip_oracle, constrained_prox_oracle, group_soft_threshold_oracle, l21, l21_subgrad,
    nuclear, nuclear_subgrad, prox_l1_box_oracle, soft_threshold_oracle, svt_oracle,
)
from robustmc.prox import (
    ProxConfig, box_clip, group_soft_threshold, prox_l1_box, prox_l21_box, prox_nuclear_box,
    soft_threshold, svt,
)


def random_inputs(seed, count=40, max_side=10):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        m1, m2 = rng.integers(1, max_side + 1, size=2)
        yield rng.normal(scale=rng.uniform(0.5, 3.0), size=(m1, m2)), rng.uniform(0.0, 2.0), rng

# ------------------------------------------------------------ small cases

def test_small_cases():
    assert soft_threshold([[3.0, -0.5]], 1.0).tolist() == [[2.0, 0.0]]
    A = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(soft_threshold(A, 0.0), A)
    np.testing.assert_allclose(group_soft_threshold([[3.0], [4.0]], 2.0), [[1.8], [2.4]])
    np.testing.assert_array_equal(group_soft_threshold([[0.3], [0.4]], 0.5), [[0.0], [0.0]])
    np.testing.assert_allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]), atol=1e-15)
    assert box_clip([[5.0, -1.0]], 2.0).tolist() == [[2.0, -1.0]]
    assert prox_l1_box([[10.0, 1.5]], 1.0, 2.0).tolist() == [[2.0, 0.5]]


def test_argument_checks():
    with pytest.raises(ValueError):
        soft_threshold(np.eye(2), -1.0)
    with pytest.raises(ValueError):
        box_clip(np.eye(2), 0.0)
    with pytest.raises(ValueError):
        ProxConfig(a_bound=1.0, dykstra_iters=0)


def test_svt_identity_at_zero():
    A = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_allclose(svt(A, 0.0), A, atol=1e-10)

# ------------------------------------------------------------ oracles

def test_soft_threshold_matches_grid():
    for A, tau, _ in random_inputs(1):
        np.testing.assert_allclose(soft_threshold(A, tau), soft_threshold_oracle(A, tau), atol=1e-8)


def test_group_soft_threshold_matches_radial_grid():
    for A, tau, _ in random_inputs(2):
        np.testing.assert_allclose(group_soft_threshold(A, tau),
                                   group_soft_threshold_oracle(A, tau), atol=1e-8)


def test_svt_matches_eigendecomposition():
    for A, tau, _ in random_inputs(3):
        np.testing.assert_allclose(svt(A, tau), svt_oracle(A, tau), atol=1e-8)


def test_box_ops_match_grid():
    for A, tau, rng in random_inputs(4):
        a = rng.uniform(0.2, 2.0)
        np.testing.assert_allclose(box_clip(A, a), box_clip_oracle(A, a), atol=1e-8)
        np.testing.assert_allclose(prox_l1_box(A, tau, a), prox_l1_box_oracle(A, tau, a), atol=1e-8)


def test_prox_outputs_beat_random_probes():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((4, 4)) * 2
    tau, a = 0.5, 1.0
    cases = [
        (soft_threshold(A, tau), lambda X: tau * np.abs(X).sum(), None),
        (group_soft_threshold(A, tau), lambda X: tau * l21(X), None),
        (svt(A, tau), lambda X: tau * nuclear(X), None),
        (box_clip(A, a), lambda X: 0.0, a),
        (prox_l1_box(A, tau, a), lambda X: tau * np.abs(X).sum(), a),
    ]
    for P, pen, box in cases:
        base = 0.5 * ((P - A) ** 2).sum() + pen(P)
        for i in range(1000):
            X = P + rng.normal(scale=10.0 ** rng.uniform(-4, 0), size=A.shape)
            if box is not None:
                X = np.clip(X, -box, box)
            assert base <= 0.5 * ((X - A) ** 2).sum() + pen(X) + 1e-12

# ------------------------------------------------------------ properties

@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6), st.floats(0, 2))
def test_exact_proxes_are_nonexpansive(m1, m2, seed, tau):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((2, m1, m2)) * 2
    d = np.linalg.norm(A - B)
    for op in (lambda X: soft_threshold(X, tau), lambda X: group_soft_threshold(X, tau),
               lambda X: svt(X, tau), lambda X: box_clip(X, 1.0),
               lambda X: prox_l1_box(X, tau, 1.0)):
        assert np.linalg.norm(op(A) - op(B)) <= d + 1e-10


def test_permutation_equivariance():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((5, 4))
    pr, pc = rng.permutation(5), rng.permutation(4)
    # row order changes the summation order of column norms, hence the rounding slack
    np.testing.assert_allclose(group_soft_threshold(A[pr], 0.7),
                               group_soft_threshold(A, 0.7)[pr], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(group_soft_threshold(A[:, pc], 0.7),
                                  group_soft_threshold(A, 0.7)[:, pc])
    np.testing.assert_array_equal(soft_threshold(A[pr][:, pc], 0.7),
                                  soft_threshold(A, 0.7)[pr][:, pc])


def test_svt_keeps_leading_subspaces():
    rng = np.random.default_rng(7)
    U, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    V, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    s = np.array([9.0, 6.0, 3.0, 0.5, 0.1])
    A = U[:, :5] * s @ V.T
    Ux, sx, Vxt = np.linalg.svd(svt(A, 1.0))
    assert np.sum(sx > 1e-10) == 3
    for basis, ref in ((Ux[:, :3], U[:, :3]), (Vxt[:3].T, V[:, :3])):
        cosines = np.linalg.svd(basis.T @ ref, compute_uv=False)
        angles = np.arccos(np.clip(cosines, -1, 1))
        assert angles.max() < 1e-6

# ------------------------------------------------------------ box-constrained proxes

def test_nuclear_box_inactive_is_exact():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((4, 4)) * 0.2
    X, exact = prox_nuclear_box(A, 0.1, 1.0, return_info=True)
    assert exact
    np.testing.assert_allclose(X, svt(A, 0.1), atol=1e-14)
    np.testing.assert_allclose(prox_nuclear_box(A, 0.0, 1.0), A, atol=1e-12)


BOX_CASES = [("nuclear", prox_nuclear_box, nuclear, nuclear_subgrad),
             ("l21", prox_l21_box, l21, l21_subgrad)]


def active_box_problems(seed, count=3):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield rng.standard_normal((3, 3)) * 2.0, 0.3, 0.6


@pytest.mark.parametrize("name,prox,pen,subgrad", BOX_CASES)
def test_box_prox_matches_subgradient_oracle(name, prox, pen, subgrad):
    for A, tau, a in active_box_problems(9):
        X, exact = prox(A, tau, a, ProxConfig(a, dykstra_iters=200), return_info=True)
        assert not exact
        assert np.abs(X).max() <= a
        ours = 0.5 * ((X - A) ** 2).sum() + tau * pen(X)
        _, ref = constrained_prox_oracle(A, tau, a, subgrad, pen)
        assert abs(ours - ref) <= 1e-4


@pytest.mark.parametrize("name,prox,pen,subgrad", BOX_CASES)
def test_default_dykstra_rounds_stay_feasible_and_close(name, prox, pen, subgrad):
    # 20 rounds is a budget, not a guarantee: the gap shrinks with more rounds
    for A, tau, a in active_box_problems(11, count=20):
        f = lambda X: 0.5 * ((X - A) ** 2).sum() + tau * pen(X)
        short = prox(A, tau, a)
        long = prox(A, tau, a, ProxConfig(a, dykstra_iters=2000))
        assert np.abs(short).max() <= a
        assert f(long) <= f(short) + 1e-12
        assert f(short) - f(long) <= 0.05


def test_l21_box_inactive_is_exact():
    A = np.array([[0.3, 2.0], [0.4, 0.0]])
    X, exact = prox_l21_box(A, 0.1, 5.0, return_info=True)
    assert exact
    np.testing.assert_allclose(X, group_soft_threshold(A, 0.1))
