"""Comparison baseline: MSE-trained network, then Bayesian regression on
its frozen features.

``train_mse`` fits the network weights by plain mean-squared error.
``blr_fit`` then treats the hidden layers as a fixed feature map and
maximizes the same marginal-likelihood objective over the output weights
and hyperparameters only, finalizing the output weights in closed form.
The resulting model is an ordinary ``BllModel``, so prediction, scoring
and alpha tuning are shared with the jointly trained variant.
"""

import numpy as np

from . import autodiff as ad
from .bll import (
    BllHyper,
    BllModel,
    closed_form_wbar,
    fit_posterior,
    negative_lml,
    negative_lml_grads,
)
from .data import Dataset, fit_standardizer, split_train_val
from .mlp import MlpParams, MlpSpec, features, init_params
from .training import TrainConfig, TrainHistory, clamp_hyper_tail, standardize_with, fit_loop
from .rng import make_rng

__all__ = ["BlrModel", "blr_fit", "train_mse"]

# Identical predictive machinery; only the fitting route differs.
BlrModel = BllModel


def _mse_graph(weights, x, t, activation):
    act = ad.tanh if activation == "tanh" else ad.relu
    a = ad.constant(x)
    for w in weights[:-1]:
        a = act(ad.affine(a, w))
    resid = ad.constant(t) - ad.affine(a, weights[-1])
    return (1.0 / t.size) * ad.tensor_sum(resid * resid)


def train_mse(
    spec: MlpSpec,
    train_data: Dataset,
    cfg: TrainConfig,
    val_data: Dataset | None = None,
) -> tuple[MlpParams, TrainHistory]:
    """Early-stopped Adam on the mean-squared error.

    Returns parameters in standardized data space (the same standardization
    ``blr_fit`` rebuilds from the training data).
    """
    x_scaler = fit_standardizer(train_data.x)
    t_scaler = fit_standardizer(train_data.t)
    if val_data is not None:
        fit_part, val_part = train_data, val_data
    elif cfg.val_fraction is not None and train_data.m >= 5:
        fit_part, val_part = split_train_val(train_data, cfg.val_fraction, cfg.seed)
    else:
        fit_part, val_part = train_data, None
    fit_std = standardize_with(fit_part, x_scaler, t_scaler)
    val_std = standardize_with(val_part, x_scaler, t_scaler) if val_part is not None else None

    params0 = init_params(spec, make_rng(cfg.seed))
    leaves = list(params0.weights)

    def loss_and_grads(vals):
        return ad.value_and_grad(
            lambda ts: _mse_graph(ts, fit_std.x, fit_std.t, spec.activation), vals
        )

    monitor = None
    if val_std is not None:

        def monitor(vals):
            value, _ = ad.value_and_grad(
                lambda ts: _mse_graph(ts, val_std.x, val_std.t, spec.activation), vals
            )
            return value

    best, history = fit_loop(leaves, loss_and_grads, cfg, monitor=monitor)
    return MlpParams(tuple(best), spec.activation), history


def blr_fit(
    frozen: MlpParams,
    train_data: Dataset,
    cfg: TrainConfig,
    val_data: Dataset | None = None,
) -> tuple[BlrModel, TrainHistory]:
    """Empirical-Bayes regression on a fixed feature map.

    Maximizes the marginal-likelihood objective over the output weights and
    the log hyperparameters with the hidden layers excluded from the
    gradient, then replaces the output weights by their closed-form
    posterior mean before caching the model.
    """
    x_scaler = fit_standardizer(train_data.x)
    t_scaler = fit_standardizer(train_data.t)
    if val_data is not None:
        fit_part, val_part = train_data, val_data
    elif cfg.val_fraction is not None and train_data.m >= 5:
        fit_part, val_part = split_train_val(train_data, cfg.val_fraction, cfg.seed)
    else:
        fit_part, val_part = train_data, None
    fit_std = standardize_with(fit_part, x_scaler, t_scaler)
    val_std = standardize_with(val_part, x_scaler, t_scaler) if val_part is not None else None

    n_y = train_data.n_y
    leaves = [
        frozen.wbar.copy(),
        np.asarray(cfg.init_log_alpha, dtype=float),
        np.full(n_y, cfg.init_log_sigma_e, dtype=float),
    ]

    def unpack(vals):
        params = frozen.replace_wbar(vals[0])
        hyper = BllHyper(float(vals[1]), vals[2])
        return params, hyper

    def loss_and_grads(vals):
        params, hyper = unpack(vals)
        value, (w_grads, g_la, g_ls) = negative_lml_grads(
            params, hyper, fit_std, freeze_features=True
        )
        return value, [w_grads[-1], g_la, g_ls]

    monitor = None
    if val_std is not None:

        def monitor(vals):
            params, hyper = unpack(vals)
            return negative_lml(params, hyper, val_std)

    best, history = fit_loop(
        leaves, loss_and_grads, cfg, monitor=monitor, post_step=clamp_hyper_tail(2)
    )
    params, hyper = unpack(best)
    phi = features(params, fit_std.x)
    params = params.replace_wbar(closed_form_wbar(phi, fit_std.t, hyper.alpha))
    model = fit_posterior(params, hyper, fit_std, x_scaler=x_scaler, t_scaler=t_scaler)
    return model, history
