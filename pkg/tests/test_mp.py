import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusion_lab.exact import exact_joint_enumeration
from fusion_lab.model import ModelParams
from fusion_lab.mp import (
    CLAMP_LOGIT,
    fuse_mp,
    init_messages,
    iterate,
)


def forward_backward(R, eps, rho):
    """p(s_i = 0 | R) for an all-honest network, by scaled forward-backward."""
    R = np.asarray(R)
    m = R.shape[0]
    wrong = np.stack([R.sum(1), (1 - R).sum(1)], axis=1)  # wrong[i, s]
    right = R.shape[1] - wrong
    em = (1 - eps) ** right * eps**wrong
    T = np.array([[rho, 1 - rho], [1 - rho, rho]])
    fwd = np.empty((m, 2))
    bwd = np.ones((m, 2))
    f = 0.5 * em[0]
    fwd[0] = f / f.sum()
    for i in range(1, m):
        f = (fwd[i - 1] @ T) * em[i]
        fwd[i] = f / f.sum()
    for i in range(m - 2, -1, -1):
        b = T @ (em[i + 1] * bwd[i + 1])
        bwd[i] = b / b.sum()
    post = fwd * bwd
    return post[:, 0] / post.sum(1)


@st.composite
def instances(draw, m=None, n=None, alpha=None, rho=None):
    m = draw(st.integers(1, 6)) if m is None else m
    n = draw(st.integers(1, 6)) if n is None else n
    p = ModelParams(
        n=n,
        m=m,
        epsilon=draw(st.floats(0.01, 0.45)),
        alpha=draw(st.floats(0.0, 0.5)) if alpha is None else alpha,
        rho=draw(st.floats(0.05, 0.95)) if rho is None else rho,
        pmal_true=draw(st.floats(0.0, 1.0)),
    )
    seed = draw(st.integers(0, 2**32 - 1))
    R = np.random.default_rng(seed).integers(0, 2, (m, n))
    return R, p


class TestExactOnTrees:
    @settings(max_examples=200, deadline=None)
    @given(instances(m=1))
    def test_single_slot_one_iteration(self, inst):
        R, p = inst
        a = fuse_mp(R, p, max_iters=1)
        b = exact_joint_enumeration(R, p)
        np.testing.assert_allclose(a.state_posteriors, b.state_posteriors, atol=1e-9)
        np.testing.assert_allclose(a.honesty_posteriors, b.node_posteriors, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(instances(n=1, rho=0.5))
    def test_single_node_star(self, inst):
        R, p = inst
        a = fuse_mp(R, p, max_iters=3)
        b = exact_joint_enumeration(R, p)
        np.testing.assert_allclose(a.state_posteriors, b.state_posteriors, atol=1e-9)
        np.testing.assert_allclose(a.honesty_posteriors, b.node_posteriors, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(instances(alpha=0.0))
    def test_all_honest_chain(self, inst):
        R, p = inst
        a = fuse_mp(R, p, max_iters=3)
        b = exact_joint_enumeration(R, p)
        np.testing.assert_allclose(a.state_posteriors, b.state_posteriors, atol=1e-9)

    @pytest.mark.parametrize("rho", [0.5, 0.8, 0.95])
    def test_all_honest_matches_forward_backward(self, rho):
        rng = np.random.default_rng(int(rho * 100))
        p = ModelParams(n=20, m=30, epsilon=0.15, alpha=0.0, rho=rho)
        for _ in range(20):
            s = rng.integers(0, 2, 30)
            R = (s[:, None] ^ (rng.random((30, 20)) < 0.15)).astype(np.uint8)
            # a few unanimous-looking slots push log-odds towards the clamp
            R[:5] = rng.random((5, 20)) < 0.5
            got = fuse_mp(R, p, max_iters=5)
            np.testing.assert_allclose(
                got.state_posteriors, forward_backward(R, 0.15, rho), atol=1e-9
            )


class TestSymmetry:
    @settings(max_examples=100, deadline=None)
    @given(instances())
    def test_flipping_reports_negates_state_logodds(self, inst):
        R, p = inst
        a = fuse_mp(R, p)
        b = fuse_mp(1 - R, p)
        np.testing.assert_array_equal(b.state_logodds, -a.state_logodds)
        np.testing.assert_array_equal(b.honesty_logodds, a.honesty_logodds)
        assert a.iterations_used == b.iterations_used

    @settings(max_examples=50, deadline=None)
    @given(instances(), st.data())
    def test_node_permutation_equivariance(self, inst, data):
        R, p = inst
        perm = data.draw(st.permutations(range(p.n)))
        a = fuse_mp(R, p)
        b = fuse_mp(R[:, perm], p)
        np.testing.assert_allclose(b.state_logodds, a.state_logodds, atol=1e-9)
        np.testing.assert_allclose(b.honesty_logodds, a.honesty_logodds[perm], atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(instances())
    def test_time_reversal(self, inst):
        R, p = inst
        a = fuse_mp(R, p)
        b = fuse_mp(R[::-1], p)
        np.testing.assert_allclose(b.state_logodds, a.state_logodds[::-1], atol=1e-9)


class TestBehaviour:
    def test_unanimous_zeros(self):
        p = ModelParams(n=20, m=10, epsilon=0.15, alpha=0.3, rho=0.5)
        res = fuse_mp(np.zeros((10, 20), np.uint8), p)
        assert (res.decisions == 0).all()
        assert (res.state_posteriors > 0.99).all()

    def test_pinned_honesty_prior(self):
        p = ModelParams(n=5, m=8, epsilon=0.2, alpha=0.0, rho=0.7)
        R = np.random.default_rng(0).integers(0, 2, (8, 5))
        res = fuse_mp(R, p)
        assert (res.honesty_posteriors == 0.0).all()

    def test_posteriors_are_probabilities(self):
        p = ModelParams(n=20, m=15, epsilon=0.15, alpha=0.45, rho=0.95)
        R = np.random.default_rng(2).integers(0, 2, (40, 15, 20))
        res = fuse_mp(R, p)
        for x in (res.state_posteriors, res.honesty_posteriors):
            assert np.isfinite(x).all() and (x >= 0).all() and (x <= 1).all()

    def test_decisions_follow_posteriors(self):
        p = ModelParams(n=20, m=10, epsilon=0.15, alpha=0.3, rho=0.5)
        R = np.random.default_rng(3).integers(0, 2, (50, 10, 20))
        res = fuse_mp(R, p)
        clear = np.abs(res.state_posteriors - 0.5) > 1e-6
        np.testing.assert_array_equal(
            res.decisions[clear], (res.state_posteriors[clear] < 0.5).astype(np.uint8)
        )

    def test_exact_tie_uses_coin(self):
        # one node, one slot, independent statuses with alpha = 0.5 and
        # pmal = 1: the report carries no information about the state
        p = ModelParams(n=1, m=1, epsilon=0.1, alpha=0.5, rho=0.5, pmal_true=1.0)
        R = np.array([[1]])
        assert fuse_mp(R, p).decisions[0] == 0
        assert fuse_mp(R, p, coins=np.array([1])).decisions[0] == 1

    def test_deterministic(self):
        p = ModelParams(n=20, m=12, epsilon=0.15, alpha=0.4, rho=0.9)
        R = np.random.default_rng(4).integers(0, 2, (12, 20))
        a, b = fuse_mp(R, p), fuse_mp(R, p)
        np.testing.assert_array_equal(a.state_logodds, b.state_logodds)
        np.testing.assert_array_equal(a.honesty_logodds, b.honesty_logodds)

    def test_batch_matches_single(self):
        p = ModelParams(n=20, m=10, epsilon=0.15, alpha=0.45, rho=0.95)
        R = np.random.default_rng(5).integers(0, 2, (30, 10, 20))
        batch = fuse_mp(R, p, max_iters=8)
        for k in range(len(R)):
            one = fuse_mp(R[k], p, max_iters=8)
            np.testing.assert_array_equal(batch.state_logodds[k], one.state_logodds)
            assert batch.iterations_used[k] == one.iterations_used
            assert batch.converged[k] == one.converged

    def test_idempotent_at_convergence(self):
        p = ModelParams(n=20, m=10, epsilon=0.15, alpha=0.2, rho=0.8)
        rng = np.random.default_rng(6)
        s = rng.integers(0, 2, 10)
        R = (s[:, None] ^ (rng.random((10, 20)) < 0.15)).astype(np.uint8)
        st_ = init_messages(R, p)
        for _ in range(200):
            st_ = iterate(st_, R, p)
        again = iterate(st_, R, p)
        for name in st_.names():
            np.testing.assert_allclose(again.prob(name), st_.prob(name), atol=1e-9)

    def test_messages_stay_clamped(self):
        p = ModelParams(n=20, m=10, epsilon=0.01, alpha=0.3, rho=0.99)
        st_ = init_messages(np.zeros((10, 20)), p)
        for _ in range(10):
            st_ = iterate(st_, np.zeros((10, 20)), p)
        for name in st_.names():
            assert np.all(np.abs(getattr(st_, name)) <= CLAMP_LOGIT)

    def test_iteration_cap_and_convergence_flag(self):
        p = ModelParams(n=20, m=10, epsilon=0.15, alpha=0.2, rho=0.5)
        rng = np.random.default_rng(7)
        s = rng.integers(0, 2, 10)
        R = (s[:, None] ^ (rng.random((10, 20)) < 0.15)).astype(np.uint8)
        res = fuse_mp(R, p, max_iters=1)
        assert res.iterations_used == 1 and not res.converged
        res = fuse_mp(R, p, max_iters=500, tol=1e-8)
        assert res.converged and res.iterations_used < 500

    @pytest.mark.parametrize("kw", [dict(max_iters=0), dict(tol=0.0)])
    def test_bad_arguments(self, kw):
        p = ModelParams(n=2, m=2)
        with pytest.raises(ValueError):
            fuse_mp(np.zeros((2, 2)), p, **kw)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            fuse_mp(np.zeros((3, 2)), ModelParams(n=3, m=2))
