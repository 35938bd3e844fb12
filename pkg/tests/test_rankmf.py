import itertools
import math

import numpy as np
import pytest

from odselect.errors import InvalidConfigError, NonFiniteLossError
from odselect.rankmf import (
    LN2,
    OptimizerConfig,
    cyclical_lr,
    dcg_exact,
    fit,
    grad_u,
    grad_u_row,
    grad_v,
    grad_v_rows,
    sdcg,
    total_loss,
)


def dcg_of_ordering(p, ordering, b=2.0):
    """Independent oracle: DCG of an explicit ranking (position r gets the
    standard log2(1+r) discount)."""
    return sum((b ** p[j] - 1.0) / math.log2(1 + r)
               for r, j in enumerate(ordering, start=1))


def fd_grad_u(p_row, u, V, b, alpha, h=1e-5):
    out = np.zeros_like(u)
    for c in range(len(u)):
        up, dn = u.copy(), u.copy()
        up[c] += h
        dn[c] -= h
        out[c] = (-sdcg(p_row, V @ up, b, alpha) + sdcg(p_row, V @ dn, b, alpha)) / (2 * h)
    return out


def fd_grad_v(p_row, u, V, b, alpha, h=1e-5):
    out = np.zeros_like(V)
    for j in range(V.shape[0]):
        for c in range(V.shape[1]):
            up, dn = V.copy(), V.copy()
            up[j, c] += h
            dn[j, c] -= h
            out[j, c] = (-sdcg(p_row, up @ u, b, alpha) + sdcg(p_row, dn @ u, b, alpha)) / (2 * h)
    return out


class TestDcgExact:
    def test_hand_example_forward(self):
        assert dcg_exact([1.0, 0.5], [0.9, 0.1], 2.0) == pytest.approx(
            1.0 + (2 ** 0.5 - 1) / math.log2(3), abs=1e-12
        )
        assert dcg_exact([1.0, 0.5], [0.9, 0.1], 2.0) == pytest.approx(1.26134, abs=1e-4)

    def test_hand_example_reversed(self):
        assert dcg_exact([1.0, 0.5], [0.1, 0.9], 2.0) == pytest.approx(
            (2 ** 0.5 - 1) + 1.0 / math.log2(3), abs=1e-12
        )

    def test_single_item(self):
        for phat in (0.0, 5.0, -3.0):
            assert dcg_exact([0.7], [phat], 2.0) == pytest.approx(2 ** 0.7 - 1)

    def test_ties_broken_by_index(self):
        p = np.array([0.2, 0.9, 0.4])
        # all predictions equal: ranks are 1, 2, 3 by index
        expected = sum((2 ** pi - 1) / math.log2(2 + i) for i, pi in enumerate(p))
        assert dcg_exact(p, [0.5, 0.5, 0.5], 2.0) == pytest.approx(expected)

    def test_sorted_order_is_optimal_brute_force(self, rng):
        for _ in range(20):
            m = int(rng.integers(2, 7))
            p = rng.random(m)
            best_order = sorted(range(m), key=lambda j: -p[j])
            best = dcg_of_ordering(p, best_order)
            for perm in itertools.permutations(range(m)):
                assert dcg_of_ordering(p, perm) <= best + 1e-12
            # the induced ranking of a monotone phat matches the oracle
            phat = np.empty(m)
            phat[list(best_order)] = np.linspace(1, 0, m)
            assert dcg_exact(p, phat) == pytest.approx(best)

    def test_shift_invariance(self, rng):
        p = rng.random(6)
        phat = rng.normal(0, 1, 6)
        assert dcg_exact(p, phat) == pytest.approx(dcg_exact(p, phat + 13.7))


class TestSdcg:
    def test_all_equal_predictions(self):
        # every smoothed rank is 2 + (m-1)/2; for m=2 the denominator is log2(2.5)
        expected = (1.0 + (2 ** 0.5 - 1)) / math.log2(2.5)
        assert sdcg([1.0, 0.5], [0.3, 0.3], 2.0, 1.0) == pytest.approx(expected, abs=1e-12)

    def test_large_alpha_limit(self):
        exact = dcg_exact([1.0, 0.5], [0.9, 0.1], 2.0)
        assert abs(sdcg([1.0, 0.5], [0.9, 0.1], 2.0, 50.0) - exact) < 1e-3

    def test_single_item_matches_exact(self):
        assert sdcg([0.7], [2.0], 2.0, 1.0) == pytest.approx(dcg_exact([0.7], [2.0], 2.0))

    def test_alpha_sharpens_monotonically(self, rng):
        for _ in range(30):
            m = int(rng.integers(2, 8))
            p = rng.random(m)
            phat = rng.permutation(np.linspace(0, 1, m) * 3)
            exact = dcg_exact(p, phat)
            gaps = [abs(sdcg(p, phat, 2.0, a) - exact) for a in (10.0, 50.0, 200.0)]
            assert gaps[0] >= gaps[1] >= gaps[2]
            assert gaps[2] < 1e-3

    def test_shift_invariance(self, rng):
        p = rng.random(5)
        phat = rng.normal(0, 1, 5)
        assert sdcg(p, phat, 2.0, 1.5) == pytest.approx(sdcg(p, phat - 4.2, 2.0, 1.5))


class TestGradients:
    def test_grad_u_matches_finite_differences(self, rng):
        for _ in range(25):
            n, m, k = 3, int(rng.integers(2, 8)), int(rng.integers(1, 4))
            alpha = float(rng.choice([0.5, 1.0, 2.0]))
            P = rng.random((n, m))
            U = rng.normal(0, 1, (n, k))
            V = rng.normal(0, 1, (m, k))
            g = grad_u_row(P[0], U[0], V, 2.0, alpha)
            f = fd_grad_u(P[0], U[0], V, 2.0, alpha)
            scale = max(np.abs(g).max(), np.abs(f).max(), 1e-8)
            assert np.abs(g - f).max() / scale < 1e-5

    def test_grad_v_complete_matches_finite_differences(self, rng):
        for _ in range(15):
            m, k = int(rng.integers(2, 8)), int(rng.integers(1, 4))
            alpha = float(rng.choice([0.5, 1.0, 2.0]))
            p = rng.random(m)
            u = rng.normal(0, 1, k)
            V = rng.normal(0, 1, (m, k))
            g = grad_v_rows(p, u, V, 2.0, alpha, "complete")
            f = fd_grad_v(p, u, V, 2.0, alpha)
            scale = max(np.abs(g).max(), np.abs(f).max(), 1e-8)
            assert np.abs(g - f).max() / scale < 1e-5

    def test_printed_variant_misses_cross_terms(self, rng):
        p = rng.random(5)
        u = rng.normal(0, 1, 3)
        V = rng.normal(0, 1, (5, 3))
        complete = grad_v_rows(p, u, V, 2.0, 1.0, "complete")
        printed = grad_v_rows(p, u, V, 2.0, 1.0, "printed")
        f = fd_grad_v(p, u, V, 2.0, 1.0)
        assert np.allclose(complete, f, atol=1e-7)
        assert not np.allclose(printed, f, atol=1e-4)

    def test_zero_u_closed_form(self, rng):
        # at u = 0 all pairwise terms sit at the symmetric point: sigma' = 1/4
        # and every smoothed rank is 2 + (m-1)/2
        m, k = 6, 3
        p = rng.random(m)
        V = rng.normal(0, 1, (m, k))
        u = np.zeros(k)
        alpha = 1.3
        beta = 2.0 + (m - 1) / 2.0
        coeff = (2.0 ** p - 1) / (beta * np.log(beta) ** 2)
        expected = np.zeros(k)
        for j in range(m):
            inner = sum(0.25 * (V[kk] - V[j]) for kk in range(m) if kk != j)
            expected += LN2 * alpha * coeff[j] * inner
        got = grad_u_row(p, u, V, 2.0, alpha)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_index_wrappers(self, rng):
        P = rng.random((3, 4))
        U = rng.normal(0, 1, (3, 2))
        V = rng.normal(0, 1, (4, 2))
        cfg = OptimizerConfig(alpha=1.5)
        np.testing.assert_array_equal(grad_u(1, P, U, V, cfg),
                                      grad_u_row(P[1], U[1], V, 2.0, 1.5))
        np.testing.assert_array_equal(grad_v(1, 2, P, U, V, cfg),
                                      grad_v_rows(P[1], U[1], V, 2.0, 1.5)[2])

    def test_single_model_gradients_vanish(self, rng):
        u = rng.normal(0, 1, 3)
        V = rng.normal(0, 1, (1, 3))
        assert np.all(grad_u_row(np.array([0.5]), u, V, 2.0, 1.0) == 0)
        assert np.all(grad_v_rows(np.array([0.5]), u, V, 2.0, 1.0) == 0)


class TestFit:
    def test_smallest_instance_orders_correctly(self):
        P = np.array([[1.0, 0.0]])
        U0 = np.array([[0.5]])
        cfg = OptimizerConfig(seed=3, max_epochs=40)
        factors = fit(P, U0, cfg)
        phat = factors.V @ factors.U[0]
        assert phat[0] > phat[1]

    def test_seeded_determinism(self, rng):
        P = rng.random((6, 9))
        U0 = rng.normal(0, 1, (6, 2))
        cfg = OptimizerConfig(seed=11, max_epochs=10)
        a = fit(P, U0, cfg)
        b = fit(P, U0, cfg)
        np.testing.assert_array_equal(a.U, b.U)
        np.testing.assert_array_equal(a.V, b.V)
        assert a.loss_curve == b.loss_curve

    def test_planted_low_rank_recovery(self, rng):
        n, m, k = 12, 15, 3
        U_true = rng.normal(0, 1, (n, k))
        V_true = rng.normal(0, 1, (m, k))
        P = U_true @ V_true.T
        P = (P - P.min()) / (P.max() - P.min())
        P += rng.normal(0, 0.01, P.shape)
        P = np.clip(P, 0, 1)
        # embed P itself as the starting point, the strongest rank-k initializer;
        # a large base and a hot-to-cool cycle favor top-rank fidelity
        from odselect.regressor import embed_matrix, fit_embedding

        phi = fit_embedding(P, k)
        U0 = embed_matrix(phi, P)
        cfg = OptimizerConfig(seed=5, b=20.0, alpha=2.0, max_epochs=400,
                              lr_base=0.002, lr_max=0.1, cycle_len=60, tol=1e-12)
        factors = fit(P, U0, cfg)
        phat = factors.U @ factors.V.T
        mean_dcg = np.mean([dcg_exact(P[i], phat[i]) for i in range(n)])
        ideal = np.mean([dcg_exact(P[i], P[i]) for i in range(n)])
        assert mean_dcg >= 0.95 * ideal

    def test_objective_mostly_non_decreasing(self, rng):
        P = rng.random((8, 12))
        U0 = rng.normal(0, 0.5, (8, 3))
        cfg = OptimizerConfig(seed=7, max_epochs=30, tol=1e-12)
        factors = fit(P, U0, cfg)
        curve = factors.loss_curve
        tol = 1e-6 * 8 * 12
        improving = sum(1 for a, b in zip(curve, curve[1:]) if b <= a + tol)
        assert improving >= 0.9 * (len(curve) - 1)

    def test_zero_epochs_returns_initial_factors(self, rng):
        P = rng.random((4, 6))
        U0 = rng.normal(0, 1, (4, 2))
        cfg = OptimizerConfig(seed=2, max_epochs=0)
        factors = fit(P, U0, cfg)
        np.testing.assert_array_equal(factors.U, U0)
        rng_v = np.random.default_rng(2)
        np.testing.assert_array_equal(factors.V, rng_v.standard_normal((6, 2)))

    def test_divergence_raises(self, rng):
        # moderate step sizes self-limit through sigmoid saturation, so force a
        # genuine overflow: enormous gains and steps push the factors to inf
        P = rng.random((4, 6))
        U0 = rng.normal(0, 1, (4, 2))
        cfg = OptimizerConfig(seed=2, b=1e300, lr_base=1e250, lr_max=1e250, max_epochs=5)
        with pytest.raises(NonFiniteLossError):
            with np.errstate(all="ignore"):
                fit(P, U0, cfg)

    def test_bad_u0_shape(self, rng):
        with pytest.raises(InvalidConfigError):
            fit(rng.random((3, 4)), rng.normal(0, 1, (2, 2)), OptimizerConfig())

    def test_total_loss_is_negative_sdcg_sum(self, rng):
        P = rng.random((3, 5))
        U = rng.normal(0, 1, (3, 2))
        V = rng.normal(0, 1, (5, 2))
        cfg = OptimizerConfig()
        expected = -sum(sdcg(P[i], V @ U[i], cfg.b, cfg.alpha) for i in range(3))
        assert total_loss(P, U, V, cfg) == pytest.approx(expected)


class TestCyclicalLr:
    def test_triangle_shape(self):
        cfg = OptimizerConfig(lr_base=0.01, lr_max=0.1, cycle_len=10)
        lrs = [cyclical_lr(cfg, e) for e in range(10)]
        assert lrs[0] == pytest.approx(0.01)
        assert lrs[5] == pytest.approx(0.1)
        assert max(lrs) == pytest.approx(0.1) and min(lrs) == pytest.approx(0.01)
        # symmetric rise and fall
        assert lrs[1] == pytest.approx(lrs[9])

    def test_period(self):
        cfg = OptimizerConfig(cycle_len=4)
        assert cyclical_lr(cfg, 1) == cyclical_lr(cfg, 5) == cyclical_lr(cfg, 9)
