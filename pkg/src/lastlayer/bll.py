"""Bayesian last layer core.

The output layer of the network is a Bayesian linear regression on the
learned features.  With per-output noise scales sigma_e and a shared
signal-to-noise ratio alpha, the posterior precision of the output weights
factors as sigma_e^-2 * (Phi^T Phi + alpha^-1 * I~), where I~ is the
identity with a zero in the bias position (the bias carries a flat prior).

Training minimizes the scaled negative log-marginal likelihood with the
output weights reintroduced as free variables; its stationary point in
those weights coincides with the closed-form posterior mean, so plain
gradient descent on all weights and hyperparameters recovers the
marginal-likelihood solution without a matrix inverse in the loss.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .data import Dataset, Standardizer, identity_standardizer
from .linalg import CholeskyFactor, chol_spd, logdet_pd, solve_pd
from .mlp import MlpParams, features, forward_batch

__all__ = [
    "BllHyper",
    "BllModel",
    "PredictiveDistribution",
    "closed_form_wbar",
    "fit_posterior",
    "masked_identity",
    "negative_lml",
    "negative_lml_grads",
    "negative_lml_marginalized",
    "precision_bar",
    "predict",
    "predict_batch",
    "with_alpha",
]

HYPER_CLAMP = 15.0


@dataclass(frozen=True)
class BllHyper:
    """Log-parameterized hyperparameters: shared alpha, per-output sigma_e."""

    log_alpha: float
    log_sigma_e: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "log_sigma_e", np.atleast_1d(np.asarray(self.log_sigma_e, dtype=float))
        )
        if not np.isfinite(self.log_alpha) or not np.isfinite(self.log_sigma_e).all():
            raise ValueError("hyperparameters must be finite")

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @property
    def sigma_e(self) -> np.ndarray:
        return np.exp(self.log_sigma_e)

    @property
    def n_y(self) -> int:
        return self.log_sigma_e.shape[0]

    def clipped(self, bound: float = HYPER_CLAMP) -> "BllHyper":
        return BllHyper(
            float(np.clip(self.log_alpha, -bound, bound)),
            np.clip(self.log_sigma_e, -bound, bound),
        )


def masked_identity(n_phi: int, flat_bias: bool = True) -> np.ndarray:
    """Prior precision pattern: identity, bias entry zeroed when flat."""
    eye = np.eye(n_phi)
    if flat_bias:
        eye[-1, -1] = 0.0
    return eye


def precision_bar(phi: np.ndarray, alpha: float, flat_bias: bool = True) -> np.ndarray:
    """Noise-free posterior precision Phi^T Phi + alpha^-1 * I~.

    ``phi`` is the affine feature matrix whose last column is the bias
    column of ones; with a flat bias prior that diagonal entry receives no
    prior contribution.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    phi = np.asarray(phi, dtype=float)
    return phi.T @ phi + masked_identity(phi.shape[1], flat_bias) / alpha


def closed_form_wbar(
    phi: np.ndarray, t: np.ndarray, alpha: float, flat_bias: bool = True
) -> np.ndarray:
    """Posterior mean weights: the solution of precision_bar @ w = Phi^T t.

    The noise scale cancels between the precision and the data term, so the
    result depends only on alpha.  ``t`` may hold several target columns.
    """
    factor = chol_spd(precision_bar(phi, alpha, flat_bias))
    return solve_pd(factor, np.asarray(phi, dtype=float).T @ np.asarray(t, dtype=float))


def _nlml_graph(
    weights: list[ad.Tensor],
    log_alpha: ad.Tensor,
    log_sigma_e: ad.Tensor,
    x: np.ndarray,
    t: np.ndarray,
    activation: str,
    flat_bias: bool,
) -> ad.Tensor:
    """Scaled negative log-marginal likelihood as an autodiff graph."""
    m, n_y = t.shape
    act = ad.tanh if activation == "tanh" else ad.relu
    a = ad.constant(x)
    for w in weights[:-1]:
        a = act(ad.affine(a, w))
    phi = ad.with_ones_column(a)
    n_phi = phi.shape[1]
    y = ad.affine(a, weights[-1])

    inv_alpha = ad.exp(-log_alpha)
    gram = phi.T @ phi
    lam = gram + inv_alpha * ad.constant(masked_identity(n_phi, flat_bias))
    logdet = ad.logdet_spd(lam)

    inv_sig2 = ad.exp(-2.0 * log_sigma_e)
    resid = ad.constant(t) - y
    misfit = ad.tensor_sum(ad.tensor_sum(resid * resid, axis=0) * inv_sig2)

    wbar = weights[-1]
    if flat_bias:
        mask = np.ones((wbar.shape[0], 1))
        mask[-1, 0] = 0.0
        wbar = wbar * ad.constant(mask)
    wpen = inv_alpha * ad.tensor_sum(ad.tensor_sum(wbar * wbar, axis=0) * inv_sig2)

    return (
        0.5 * n_y * math.log(2.0 * math.pi)
        + (n_y * n_phi / (2.0 * m)) * log_alpha
        + (n_y / (2.0 * m)) * logdet
        + ad.tensor_sum(log_sigma_e)
        + (0.5 / m) * misfit
        + (0.5 / m) * wpen
    )


def negative_lml(
    params: MlpParams, hyper: BllHyper, data: Dataset, flat_bias: bool = True
) -> float:
    """Scaled negative LML with the output weights read from ``params``.

    Handles any number of outputs; with one output the multivariate sum
    collapses to the scalar form term by term.  Value only: the graph is
    built over constants, so no backward pass is paid.
    """
    out = _nlml_graph(
        [ad.constant(w) for w in params.weights],
        ad.constant(np.asarray(hyper.log_alpha, dtype=float)),
        ad.constant(hyper.log_sigma_e),
        data.x,
        data.t,
        params.activation,
        flat_bias,
    )
    value = float(out.data)
    if not np.isfinite(value):
        raise ad.NonFiniteLoss(f"objective evaluated to {value}")
    return value


def negative_lml_grads(
    params: MlpParams,
    hyper: BllHyper,
    data: Dataset,
    flat_bias: bool = True,
    freeze_features: bool = False,
):
    """Objective value and gradients for (weights, log_alpha, log_sigma_e).

    With ``freeze_features`` the hidden layers enter as constants and their
    gradient slots come back as zeros (features fixed, regression trained).
    """
    n_w = len(params.weights)
    log_alpha = np.asarray(hyper.log_alpha, dtype=float)

    if freeze_features:
        hidden = [ad.constant(w) for w in params.weights[:-1]]

        def fn(leaves):
            return _nlml_graph(
                hidden + [leaves[0]],
                leaves[1],
                leaves[2],
                data.x,
                data.t,
                params.activation,
                flat_bias,
            )

        arrays = [params.weights[-1], log_alpha, hyper.log_sigma_e]
        value, grads = ad.value_and_grad(fn, arrays)
        weight_grads = [np.zeros_like(w) for w in params.weights[:-1]] + [grads[0]]
        return value, (weight_grads, grads[1], grads[2])

    def fn(leaves):
        return _nlml_graph(
            leaves[:n_w],
            leaves[n_w],
            leaves[n_w + 1],
            data.x,
            data.t,
            params.activation,
            flat_bias,
        )

    arrays = [*params.weights, log_alpha, hyper.log_sigma_e]
    value, grads = ad.value_and_grad(fn, arrays)
    return value, (grads[:n_w], grads[n_w], grads[n_w + 1])


def negative_lml_marginalized(
    phi: np.ndarray, t: np.ndarray, hyper: BllHyper, flat_bias: bool = True
) -> float:
    """Scaled negative LML with the output weights profiled out exactly.

    At the optimum the quadratic terms collapse to
    sigma_e^-2 * (t^T t - t^T Phi w), which this computes directly; it is
    the value the free-weight objective attains at its stationary point.
    """
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if t.shape[0] == 1 and phi.shape[0] > 1:
        t = t.T
    m, n_y = t.shape
    n_phi = phi.shape[1]
    factor = chol_spd(precision_bar(phi, hyper.alpha, flat_bias))
    wbar = solve_pd(factor, phi.T @ t)
    quad = np.einsum("ij,ij->j", t, t) - np.einsum("ij,ij->j", phi.T @ t, wbar)
    inv_sig2 = np.exp(-2.0 * hyper.log_sigma_e)
    return float(
        0.5 * n_y * math.log(2.0 * math.pi)
        + (n_y * n_phi / (2.0 * m)) * hyper.log_alpha
        + (n_y / (2.0 * m)) * logdet_pd(factor)
        + np.sum(hyper.log_sigma_e)
        + (0.5 / m) * np.sum(quad * inv_sig2)
    )


@dataclass(frozen=True)
class PredictiveDistribution:
    """Per-output Gaussian prediction: mean, function and target variances."""

    mean: np.ndarray
    var_y: np.ndarray
    var_t: np.ndarray


@dataclass(frozen=True)
class BllModel:
    """Frozen feature map plus the posterior over the output layer.

    ``params`` and ``hyper`` live in standardized data space; the scalers
    map predictions back to original units.  ``phi`` retains the training
    feature matrix for diagnostics and extrapolation scoring, and
    ``wbar_gap`` records how far the trained output weights sit from their
    closed-form stationary value (a convergence diagnostic, not an error).
    """

    params: MlpParams
    hyper: BllHyper
    chol: CholeskyFactor
    phi: np.ndarray
    x_scaler: Standardizer
    t_scaler: Standardizer
    wbar_gap: float

    @property
    def wbar(self) -> np.ndarray:
        return self.params.wbar

    @property
    def alpha(self) -> float:
        return self.hyper.alpha

    @property
    def sigma_e(self) -> np.ndarray:
        """Noise scales in original target units."""
        return self.hyper.sigma_e * self.t_scaler.scale


def fit_posterior(
    params: MlpParams,
    hyper: BllHyper,
    data: Dataset,
    x_scaler: Standardizer | None = None,
    t_scaler: Standardizer | None = None,
) -> BllModel:
    """Cache the posterior pieces for a trained network on its training data."""
    phi = features(params, data.x)
    factor = chol_spd(precision_bar(phi, hyper.alpha))
    wbar = params.wbar
    closed = solve_pd(factor, phi.T @ data.t)
    gap = float(np.max(np.abs(wbar - closed)))
    return BllModel(
        params=params,
        hyper=hyper,
        chol=factor,
        phi=phi,
        x_scaler=x_scaler or identity_standardizer(data.n_x),
        t_scaler=t_scaler or identity_standardizer(data.n_y),
        wbar_gap=gap,
    )


def predict_batch(model: BllModel, x: np.ndarray):
    """Predictive means and variances (original units) for rows of ``x``.

    Returns arrays (mean, var_y, var_t), each of shape (m, n_y).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y_std, phi_t = forward_batch(model.params, model.x_scaler.transform(x))
    phi = np.concatenate([phi_t, np.ones((phi_t.shape[0], 1))], axis=1)
    quad = np.einsum("ij,ij->i", phi, solve_pd(model.chol, phi.T).T)
    sig2_std = np.exp(2.0 * model.hyper.log_sigma_e)
    t_scale2 = model.t_scaler.scale**2
    var_y = np.outer(quad, sig2_std) * t_scale2
    var_t = var_y + sig2_std * t_scale2
    mean = model.t_scaler.inverse(y_std)
    return mean, var_y, var_t


def predict(model: BllModel, x: np.ndarray) -> PredictiveDistribution:
    """Exact Gaussian predictive distribution at a single input point."""
    mean, var_y, var_t = predict_batch(model, np.asarray(x, dtype=float).reshape(1, -1))
    return PredictiveDistribution(mean[0], var_y[0], var_t[0])


def with_alpha(model: BllModel, alpha: float) -> BllModel:
    """Same model with a new alpha; only the precision factor is rebuilt."""
    hyper = BllHyper(math.log(alpha), model.hyper.log_sigma_e)
    factor = chol_spd(precision_bar(model.phi, alpha))
    return replace(model, hyper=hyper, chol=factor)
