"""Variational Bayesian neural network baseline (Bayes by Backprop).

Every weight gets a diagonal-Gaussian surrogate posterior N(mu, sigma^2)
with sigma = softplus(rho).  Training minimizes the negative evidence lower
bound: the Monte Carlo data term uses one reparameterized weight sample per
step, and the KL term against the prior is closed form.  Hidden layers keep
a fixed zero-mean prior; the output layer's prior spread and the noise
scales are learned jointly (empirical Bayes), mirroring the treatment of
the Bayesian-last-layer hyperparameters.

Prediction samples weight sets from the surrogate and returns a uniform
Gaussian mixture over the resulting network outputs.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .data import Dataset, Standardizer, fit_standardizer, split_train_val
from .mlp import MlpSpec, init_params
from .rng import spawn_rngs
from .training import TrainConfig, TrainHistory, clamp_hyper_tail, standardize_with, fit_loop

__all__ = [
    "GmmPredictive",
    "ViModel",
    "ViParams",
    "gmm_lpd",
    "kl_diag_gaussian",
    "vi_predict",
    "vi_predict_batch",
    "vi_train",
]

LOG_2PI = math.log(2.0 * math.pi)
RHO_INIT = math.log(math.expm1(0.05))  # softplus(rho) = 0.05 at init


@dataclass(frozen=True)
class ViParams:
    """Surrogate means/spreads per layer plus learned last-layer scales."""

    mus: tuple[np.ndarray, ...]
    rhos: tuple[np.ndarray, ...]
    log_prior_spread: np.ndarray  # last-layer prior, one entry per output
    log_sigma_e: np.ndarray
    hidden_prior_var: float
    activation: str = "tanh"

    @property
    def sigmas(self) -> tuple[np.ndarray, ...]:
        return tuple(np.logaddexp(0.0, r) for r in self.rhos)


@dataclass(frozen=True)
class ViModel:
    params: ViParams
    x_scaler: Standardizer
    t_scaler: Standardizer

    @property
    def sigma_e(self) -> np.ndarray:
        """Noise scales in original target units."""
        return np.exp(self.params.log_sigma_e) * self.t_scaler.scale


@dataclass(frozen=True)
class GmmPredictive:
    """Uniform Gaussian mixture: component means plus shared noise variance."""

    means: np.ndarray  # (n_components, n_y)
    noise_var: np.ndarray  # (n_y,)


def kl_diag_gaussian(mu: np.ndarray, sigma: np.ndarray, prior_sigma) -> float:
    """KL(N(mu, sigma^2) || N(0, prior_sigma^2)), summed over entries."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    prior_var = np.asarray(prior_sigma, dtype=float) ** 2
    return float(
        np.sum(0.5 * np.log(prior_var / sigma**2) + (sigma**2 + mu**2) / (2 * prior_var) - 0.5)
    )


def _elbo_graph(leaves, eps_sets, x, t, spec: MlpSpec, hidden_prior_var: float):
    """Negative ELBO / m as an autodiff graph; one entry of eps_sets per MC draw."""
    n_layers = len(spec.layer_shapes())
    mus = leaves[:n_layers]
    rhos = leaves[n_layers : 2 * n_layers]
    log_prior_spread = leaves[2 * n_layers]
    log_sigma_e = leaves[2 * n_layers + 1]
    m, n_y = t.shape
    act = ad.tanh if spec.activation == "tanh" else ad.relu

    inv_sig2 = ad.exp(-2.0 * log_sigma_e)
    nll = None
    for eps in eps_sets:
        a = ad.constant(x)
        for mu, rho, e in zip(mus[:-1], rhos[:-1], eps[:-1]):
            w = mu + ad.softplus(rho) * ad.constant(e)
            a = act(ad.affine(a, w))
        w_last = mus[-1] + ad.softplus(rhos[-1]) * ad.constant(eps[-1])
        resid = ad.constant(t) - ad.affine(a, w_last)
        quad = ad.tensor_sum(ad.tensor_sum(resid * resid, axis=0) * inv_sig2)
        draw = 0.5 * m * n_y * LOG_2PI + m * ad.tensor_sum(log_sigma_e) + 0.5 * quad
        nll = draw if nll is None else nll + draw
    nll = (1.0 / len(eps_sets)) * nll

    # Closed-form KL against the priors.
    kl = None
    prior_var = hidden_prior_var
    for mu, rho in zip(mus[:-1], rhos[:-1]):
        sigma = ad.softplus(rho)
        term = (
            -ad.tensor_sum(ad.log(sigma))
            + (0.5 / prior_var) * ad.tensor_sum(sigma * sigma + mu * mu)
            + 0.5 * mu.data.size * math.log(prior_var)
            - 0.5 * mu.data.size
        )
        kl = term if kl is None else kl + term
    mu, rho = mus[-1], rhos[-1]
    sigma = ad.softplus(rho)
    rows = mu.data.shape[0]
    inv_prior = ad.exp(-2.0 * log_prior_spread)
    kl_last = (
        rows * ad.tensor_sum(log_prior_spread)
        - ad.tensor_sum(ad.log(sigma))
        + 0.5 * ad.tensor_sum(ad.tensor_sum(sigma * sigma + mu * mu, axis=0) * inv_prior)
        - 0.5 * mu.data.size
    )
    kl = kl + kl_last
    return (1.0 / m) * (nll + kl)


def vi_train(
    spec: MlpSpec,
    train_data: Dataset,
    cfg: TrainConfig,
    n_mc: int = 1,
    val_data: Dataset | None = None,
    hidden_prior_var: float = 0.5,
) -> tuple[ViModel, TrainHistory]:
    """Fit the surrogate posterior by minimizing the negative ELBO.

    The early-stopping monitor is the validation negative log-likelihood at
    the surrogate means, which is deterministic and cheap.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
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

    init_rng, noise_rng = spawn_rngs(cfg.seed, 2)
    params0 = init_params(spec, init_rng)
    shapes = spec.layer_shapes()
    n_y = train_data.n_y
    leaves = [
        *[w.copy() for w in params0.weights],
        *[np.full(s, RHO_INIT) for s in shapes],
        np.full(n_y, 0.5 * math.log(hidden_prior_var)),
        np.full(n_y, cfg.init_log_sigma_e, dtype=float),
    ]

    def loss_and_grads(vals):
        eps_sets = [
            [noise_rng.standard_normal(s) for s in shapes] for _ in range(n_mc)
        ]
        return ad.value_and_grad(
            lambda ts: _elbo_graph(ts, eps_sets, fit_std.x, fit_std.t, spec, hidden_prior_var),
            vals,
        )

    monitor = None
    if val_std is not None:
        n_layers = len(shapes)

        def monitor(vals):
            # Negative log-likelihood at the surrogate means.
            a = val_std.x
            act = np.tanh if spec.activation == "tanh" else lambda h: np.maximum(h, 0.0)
            for w in vals[:n_layers][:-1]:
                a = act(a @ w[:-1] + w[-1])
            w = vals[n_layers - 1]
            y = a @ w[:-1] + w[-1]
            sig2 = np.exp(2.0 * vals[-1])
            resid = val_std.t - y
            per_output = 0.5 * (LOG_2PI + np.log(sig2)) + (resid**2).mean(axis=0) / (
                2.0 * sig2
            )
            return float(per_output.sum())

    best, history = fit_loop(
        leaves, loss_and_grads, cfg, monitor=monitor, post_step=clamp_hyper_tail(2)
    )
    n_layers = len(shapes)
    params = ViParams(
        mus=tuple(best[:n_layers]),
        rhos=tuple(best[n_layers : 2 * n_layers]),
        log_prior_spread=best[2 * n_layers],
        log_sigma_e=best[2 * n_layers + 1],
        hidden_prior_var=hidden_prior_var,
        activation=spec.activation,
    )
    return ViModel(params, x_scaler, t_scaler), history


def _sample_forward(params: ViParams, x_std: np.ndarray, rng) -> np.ndarray:
    act = np.tanh if params.activation == "tanh" else lambda h: np.maximum(h, 0.0)
    a = x_std
    sigmas = params.sigmas
    for i, (mu, sigma) in enumerate(zip(params.mus, sigmas)):
        w = mu + sigma * rng.standard_normal(mu.shape)
        h = a @ w[:-1] + w[-1]
        a = act(h) if i < len(params.mus) - 1 else h
    return a


def vi_predict_batch(
    model: ViModel, x: np.ndarray, n_samples: int, rng
) -> tuple[np.ndarray, np.ndarray]:
    """Component means (n_samples, m, n_y) in original units plus noise variance.

    One weight set is drawn per component and evaluated at every query row,
    so all points share the same mixture components.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_std = model.x_scaler.transform(x)
    means = np.stack(
        [
            model.t_scaler.inverse(_sample_forward(model.params, x_std, rng))
            for _ in range(n_samples)
        ]
    )
    noise_var = (np.exp(model.params.log_sigma_e) * model.t_scaler.scale) ** 2
    return means, noise_var


def vi_predict(model: ViModel, x: np.ndarray, n_samples: int, rng) -> GmmPredictive:
    """Sampled mixture predictive at a single query point."""
    means, noise_var = vi_predict_batch(
        model, np.asarray(x, dtype=float).reshape(1, -1), n_samples, rng
    )
    return GmmPredictive(means[:, 0, :], noise_var)


def gmm_lpd(pred: GmmPredictive, t: np.ndarray) -> float:
    """Log density of the mixture at ``t``, stabilized with log-sum-exp."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    comp = -0.5 * (LOG_2PI + np.log(pred.noise_var) + (t - pred.means) ** 2 / pred.noise_var)
    return float(logsumexp(comp.sum(axis=1)) - math.log(pred.means.shape[0]))


def gmm_lpd_dataset(model: ViModel, data: Dataset, n_samples: int, rng) -> float:
    """Mean mixture LPD over a dataset with shared sampled components."""
    means, noise_var = vi_predict_batch(model, data.x, n_samples, rng)
    comp = -0.5 * (LOG_2PI + np.log(noise_var) + (data.t - means) ** 2 / noise_var)
    per_point = logsumexp(comp.sum(axis=2), axis=0) - math.log(n_samples)
    return float(per_point.mean())
