import math

import numpy as np
import pytest

from lastlayer import autodiff as ad
from lastlayer.data import Dataset
from lastlayer.mlp import MlpSpec
from lastlayer.rng import make_rng
from lastlayer.training import TrainConfig
from lastlayer.vi import (
    GmmPredictive,
    ViParams,
    _elbo_graph,
    gmm_lpd,
    gmm_lpd_dataset,
    kl_diag_gaussian,
    vi_predict,
    vi_predict_batch,
    vi_train,
)

FAST = TrainConfig(max_epochs=1500, patience=300, lr=5e-3, seed=0)


def _dataset(seed=0, m=30):
    rng = make_rng(seed)
    x = np.sort(rng.uniform(-1.0, 1.0, size=m)).reshape(-1, 1)
    t = np.sin(2.0 * x) + 0.1 * rng.standard_normal((m, 1))
    return Dataset(x, t)


class TestKl:
    def test_identical_gaussians_zero(self):
        mu = np.zeros((3, 2))
        assert kl_diag_gaussian(mu, np.ones((3, 2)), 1.0) == pytest.approx(0.0)

    def test_unit_shift_half_nat(self):
        assert kl_diag_gaussian(np.array([1.0]), np.array([1.0]), 1.0) == pytest.approx(0.5)

    def test_nonnegative_random(self):
        rng = make_rng(1)
        for _ in range(50):
            mu = rng.standard_normal(6)
            sigma = np.exp(rng.uniform(-2, 1, size=6))
            prior = float(np.exp(rng.uniform(-1, 1)))
            assert kl_diag_gaussian(mu, sigma, prior) >= -1e-12

    def test_zero_only_when_equal_to_prior(self):
        value = kl_diag_gaussian(np.array([0.0, 0.0]), np.array([0.7, 0.7]), 0.7)
        assert value == pytest.approx(0.0, abs=1e-12)
        assert kl_diag_gaussian(np.array([0.1, 0.0]), np.array([0.7, 0.7]), 0.7) > 0


class TestElboGraph:
    def _leaves(self, spec, seed=0, rho=-3.0):
        rng = make_rng(seed)
        shapes = spec.layer_shapes()
        mus = [0.3 * rng.standard_normal(s) for s in shapes]
        rhos = [np.full(s, rho) for s in shapes]
        return mus + rhos + [np.array([0.2]), np.array([-0.1])]

    def test_kl_terms_match_reference(self):
        spec = MlpSpec(1, (3,), 1)
        data = _dataset(seed=2, m=8)
        leaves = self._leaves(spec)
        shapes = spec.layer_shapes()
        eps = [[np.zeros(s) for s in shapes]]
        value, _ = ad.value_and_grad(
            lambda ts: _elbo_graph(ts, eps, data.x, data.t, spec, 0.5), leaves
        )
        # reference: deterministic forward at the means plus closed-form KL
        mus, rhos = leaves[:2], leaves[2:4]
        sig = [np.logaddexp(0.0, r) for r in rhos]
        a = np.tanh(data.x @ mus[0][:-1] + mus[0][-1])
        y = a @ mus[1][:-1] + mus[1][-1]
        sigma_e = math.exp(-0.1)
        nll = 0.5 * data.m * math.log(2 * math.pi * sigma_e**2) + np.sum(
            (data.t - y) ** 2
        ) / (2 * sigma_e**2)
        kl = kl_diag_gaussian(mus[0], sig[0], math.sqrt(0.5))
        kl += kl_diag_gaussian(mus[1], sig[1], math.exp(0.2))
        assert value == pytest.approx((nll + kl) / data.m, rel=1e-10)

    def test_degenerate_spread_gradient_matches_deterministic(self):
        # with spreads collapsed the mean-gradients reduce to the
        # deterministic data term plus the prior quadratic
        spec = MlpSpec(1, (3,), 1)
        data = _dataset(seed=3, m=10)
        leaves = self._leaves(spec, rho=-40.0)
        shapes = spec.layer_shapes()
        eps = [[make_rng(4).standard_normal(s) for s in shapes]]
        _, grads = ad.value_and_grad(
            lambda ts: _elbo_graph(ts, eps, data.x, data.t, spec, 0.5), leaves
        )

        def deterministic(ts):
            a = ad.tanh(ad.affine(ad.constant(data.x), ts[0]))
            resid = ad.constant(data.t) - ad.affine(a, ts[1])
            inv_sig2 = ad.exp(-2.0 * ad.constant(np.array([-0.1])))
            nll = 0.5 * ad.tensor_sum(ad.tensor_sum(resid * resid, axis=0) * inv_sig2)
            prior = (0.5 / 0.5) * ad.tensor_sum(ts[0] * ts[0]) + 0.5 * math.exp(
                -2 * 0.2
            ) * ad.tensor_sum(ts[1] * ts[1])
            return (1.0 / data.m) * (nll + prior)

        _, det_grads = ad.value_and_grad(deterministic, [leaves[0], leaves[1]])
        np.testing.assert_allclose(grads[0], det_grads[0], atol=1e-8)
        np.testing.assert_allclose(grads[1], det_grads[1], atol=1e-8)


class TestGmmLpd:
    def test_single_component_gaussian(self):
        pred = GmmPredictive(np.array([[0.0]]), np.array([1.0]))
        assert gmm_lpd(pred, np.array([0.0])) == pytest.approx(
            -0.5 * math.log(2 * math.pi)
        )

    def test_identical_components_collapse(self):
        one = GmmPredictive(np.array([[0.3, -0.1]]), np.array([0.5, 2.0]))
        two = GmmPredictive(np.array([[0.3, -0.1], [0.3, -0.1]]), np.array([0.5, 2.0]))
        t = np.array([0.1, 0.4])
        assert gmm_lpd(one, t) == pytest.approx(gmm_lpd(two, t))

    def test_two_components_direct_summation(self):
        means = np.array([[0.0], [1.0]])
        var = np.array([0.7])
        t = np.array([0.4])
        direct = 0.5 * sum(
            math.exp(-0.5 * (t[0] - m) ** 2 / var[0]) / math.sqrt(2 * math.pi * var[0])
            for m in (0.0, 1.0)
        )
        pred = GmmPredictive(means, var)
        assert gmm_lpd(pred, t) == pytest.approx(math.log(direct), abs=1e-12)

    def test_permutation_invariant(self):
        rng = make_rng(5)
        means = rng.standard_normal((6, 2))
        var = np.array([0.3, 1.1])
        t = rng.standard_normal(2)
        base = gmm_lpd(GmmPredictive(means, var), t)
        shuffled = gmm_lpd(GmmPredictive(means[::-1].copy(), var), t)
        assert base == pytest.approx(shuffled)


class TestViTraining:
    def test_deterministic_per_seed(self):
        data = _dataset(seed=6)
        cfg = TrainConfig(max_epochs=150, patience=100, seed=3)
        m1, h1 = vi_train(MlpSpec(1, (3,), 1), data, cfg)
        m2, h2 = vi_train(MlpSpec(1, (3,), 1), data, cfg)
        assert h1.train_objective == h2.train_objective
        for a, b in zip(m1.params.mus, m2.params.mus):
            np.testing.assert_array_equal(a, b)

    def test_fits_and_predicts(self):
        data = _dataset(seed=7)
        model, history = vi_train(MlpSpec(1, (6,), 1), data, FAST)
        assert history.train_objective[history.best_epoch] < history.train_objective[0]
        rng = make_rng(0)
        means, noise_var = vi_predict_batch(model, data.x, 50, rng)
        mix_mean = means.mean(axis=0)
        assert float(np.mean((data.t - mix_mean) ** 2)) < 0.2

    def test_mixture_variance_has_noise_floor(self):
        data = _dataset(seed=8, m=20)
        model, _ = vi_train(MlpSpec(1, (3,), 1), data, FAST)
        means, noise_var = vi_predict_batch(model, data.x, 40, make_rng(1))
        total_var = means.var(axis=0) + noise_var
        assert (total_var >= noise_var - 1e-12).all()

    def test_single_sample_predictive_is_one_gaussian(self):
        data = _dataset(seed=9, m=15)
        model, _ = vi_train(MlpSpec(1, (3,), 1), data, FAST)
        pred = vi_predict(model, data.x[0], 1, make_rng(2))
        expected = -0.5 * (
            math.log(2 * math.pi * pred.noise_var[0])
            + (data.t[0, 0] - pred.means[0, 0]) ** 2 / pred.noise_var[0]
        )
        assert gmm_lpd(pred, data.t[0]) == pytest.approx(expected)

    def test_collapsed_spreads_make_identical_components(self):
        data = _dataset(seed=10, m=12)
        model, _ = vi_train(MlpSpec(1, (3,), 1), data, FAST)
        collapsed = ViParams(
            mus=model.params.mus,
            rhos=tuple(np.full_like(r, -60.0) for r in model.params.rhos),
            log_prior_spread=model.params.log_prior_spread,
            log_sigma_e=model.params.log_sigma_e,
            hidden_prior_var=model.params.hidden_prior_var,
        )
        from dataclasses import replace

        frozen_model = replace(model, params=collapsed)
        pred = vi_predict(frozen_model, data.x[0], 10, make_rng(3))
        assert np.abs(pred.means - pred.means[0]).max() < 1e-12

    def test_dataset_lpd_matches_pointwise_mixture(self):
        data = _dataset(seed=11, m=6)
        model, _ = vi_train(MlpSpec(1, (3,), 1), data, FAST)
        # shared components across points: recompute from the batch sampler
        means, noise_var = vi_predict_batch(model, data.x, 25, make_rng(4))
        per_point = [
            gmm_lpd(GmmPredictive(means[:, i, :], noise_var), data.t[i])
            for i in range(data.m)
        ]
        assert gmm_lpd_dataset(model, data, 25, make_rng(4)) == pytest.approx(
            float(np.mean(per_point))
        )
