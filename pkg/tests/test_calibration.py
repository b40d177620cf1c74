import math

import numpy as np
import pytest

from lastlayer.bll import BllHyper, fit_posterior, with_alpha
from lastlayer.calibration import AlphaSearchConfig, alpha_sweep, lpd, tune_alpha
from lastlayer.data import Dataset
from lastlayer.mlp import MlpParams, MlpSpec
from lastlayer.rng import make_rng
from lastlayer.training import TrainConfig, train


def _constant_model(m=4, c=1.5, sigma2=None):
    """Zero hidden weights: mean is the output bias, features are constant.

    At the training inputs the feature-space quadratic form is exactly 1/m,
    so var_t = sigma_e^2 * (1 + 1/m) and the mean matches the targets.
    """
    spec = MlpSpec(1, (3,), 1)
    weights = [np.zeros(s) for s in spec.layer_shapes()]
    weights[-1][-1, 0] = c
    params = MlpParams(tuple(weights))
    data = Dataset(np.zeros((m, 1)), np.full((m, 1), c))
    sigma2 = sigma2 if sigma2 is not None else m / (m + 1.0)
    hyper = BllHyper(0.0, np.array([0.5 * math.log(sigma2)]))
    return fit_posterior(params, hyper, data), data


def _trained_toy(seed=0):
    rng = make_rng(seed)
    x = np.sort(rng.uniform(-1.0, 1.0, size=(12, 1)), axis=0)
    t = np.sin(2.0 * x) + 0.05 * rng.standard_normal((12, 1))
    data = Dataset(x, t)
    cfg = TrainConfig(max_epochs=3000, patience=2999, lr=5e-3, seed=seed, val_fraction=None)
    model, _ = train(MlpSpec(1, (4,), 1), data, cfg)
    return model, data


class TestLpd:
    def test_perfect_mean_unit_variance(self):
        model, data = _constant_model()
        assert lpd(model, data) == pytest.approx(-0.5 * math.log(2.0 * math.pi), abs=1e-10)

    def test_doubling_the_scale_costs_half_log_four(self):
        m = 4
        model1, data = _constant_model(m=m)
        model2, _ = _constant_model(m=m, sigma2=4.0 * m / (m + 1.0))
        assert lpd(model1, data) - lpd(model2, data) == pytest.approx(
            0.5 * math.log(4.0), abs=1e-10
        )

    def test_one_sample_toy_value(self):
        params = MlpParams(
            (np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])), activation="relu"
        )
        data = Dataset(np.array([[1.0]]), np.array([[1.0]]))
        model = fit_posterior(params, BllHyper(0.0, np.array([0.0])), data)
        assert lpd(model, data) == pytest.approx(-0.5 * math.log(4.0 * math.pi), abs=1e-10)

    def test_decomposes_as_size_weighted_mean(self):
        model, _ = _trained_toy(seed=1)
        rng = make_rng(5)
        a = Dataset(rng.uniform(-2, 2, (7, 1)), rng.standard_normal((7, 1)))
        b = Dataset(rng.uniform(-2, 2, (13, 1)), rng.standard_normal((13, 1)))
        both = Dataset(np.concatenate([a.x, b.x]), np.concatenate([a.t, b.t]))
        expected = (7 * lpd(model, a) + 13 * lpd(model, b)) / 20
        assert lpd(model, both) == pytest.approx(expected, rel=1e-12)


class TestTuneAlpha:
    def test_finds_synthetic_unimodal_maximum(self, monkeypatch):
        # replace the score with a known single-peak function of log(alpha)
        model, data = _constant_model()
        target = model.hyper.log_alpha + 4.3

        def fake_lpd(mdl, _data):
            return -((mdl.hyper.log_alpha - target) ** 2)

        import lastlayer.calibration as calibration

        monkeypatch.setattr(calibration, "lpd", fake_lpd)
        cfg = AlphaSearchConfig(span=15.0, max_evals=80, tol=1e-4)
        alpha_max, _ = tune_alpha(model, data, cfg)
        assert math.log(alpha_max) == pytest.approx(target, abs=1e-2)

    def test_matches_dense_grid_argmax(self):
        model, data = _trained_toy(seed=2)
        rng = make_rng(11)
        # misfit validation points outside the training range
        x_val = np.concatenate([rng.uniform(1.5, 2.5, (10, 1)), rng.uniform(-2.5, -1.5, (10, 1))])
        t_val = np.sin(2.0 * x_val) + 0.05 * rng.standard_normal((20, 1))
        val = Dataset(x_val, t_val)
        cfg = AlphaSearchConfig(span=15.0, max_evals=80, tol=1e-4)
        alpha_max, tuned = tune_alpha(model, val, cfg)
        grid = np.linspace(model.hyper.log_alpha, model.hyper.log_alpha + 15.0, 400)
        values = [lpd(with_alpha(model, math.exp(g)), val) for g in grid]
        best = max(values)
        assert lpd(tuned, val) >= best - 0.05
        assert alpha_max >= model.alpha

    def test_well_fit_training_data_is_insensitive(self):
        model, data = _trained_toy(seed=3)
        alpha_max, tuned = tune_alpha(model, data)
        grid = np.linspace(model.hyper.log_alpha, model.hyper.log_alpha + 15.0, 40)
        values = [lpd(with_alpha(model, math.exp(g)), data) for g in grid]
        assert max(values) - min(values) < 0.05

    def test_flat_objective_returns_lower_bound(self):
        model, data = _constant_model(m=6)
        alpha_max, tuned = tune_alpha(model, data)
        assert alpha_max == pytest.approx(model.alpha)

    def test_never_modifies_shared_fields(self):
        model, data = _trained_toy(seed=4)
        _, tuned = tune_alpha(model, data)
        assert tuned.params is model.params
        assert tuned.x_scaler is model.x_scaler
        assert tuned.t_scaler is model.t_scaler
        np.testing.assert_array_equal(tuned.hyper.log_sigma_e, model.hyper.log_sigma_e)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AlphaSearchConfig(max_evals=5)
        with pytest.raises(ValueError):
            AlphaSearchConfig(span=-1.0)


class TestAlphaSweep:
    def test_single_row_consistency(self):
        model, data = _trained_toy(seed=5)
        rows = alpha_sweep(model, data, {"train": data}, [model.hyper.log_alpha])
        assert len(rows) == 1
        assert rows[0]["lpd_train"] == pytest.approx(lpd(model, data))
        from lastlayer.bll import negative_lml

        std = Dataset(model.x_scaler.transform(data.x), model.t_scaler.transform(data.t))
        assert rows[0]["nlml_train"] == pytest.approx(
            negative_lml(model.params, model.hyper, std)
        )

    def test_nlml_minimized_near_trained_alpha(self):
        model, data = _trained_toy(seed=6)
        grid = np.linspace(model.hyper.log_alpha - 2.0, model.hyper.log_alpha + 6.0, 17)
        rows = alpha_sweep(model, data, {}, grid)
        nlml = np.array([r["nlml_train"] for r in rows])
        step = grid[1] - grid[0]
        assert abs(grid[int(nlml.argmin())] - model.hyper.log_alpha) <= step + 1e-9

    def test_train_lpd_variation_small_on_well_fit_model(self):
        model, data = _trained_toy(seed=7)
        grid = np.linspace(model.hyper.log_alpha, model.hyper.log_alpha + 15.0, 25)
        rows = alpha_sweep(model, data, {"train": data}, grid)
        col = np.array([r["lpd_train"] for r in rows])
        assert col.max() - col.min() < 0.1
