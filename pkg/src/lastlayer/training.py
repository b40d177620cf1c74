"""Gradient training of the marginal-likelihood objective with early stopping.

``train`` standardizes the data, runs full-batch Adam over all weights and
the log hyperparameters, keeps the parameters of the best monitored epoch,
and returns the fitted posterior model.  The monitor is the same objective
evaluated on held-out data (a deterministic 20% shuffle split by default,
or an explicit validation set); without any validation data the training
objective itself is monitored, which turns early stopping into a plain
convergence check.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteLoss
from .bll import BllHyper, BllModel, fit_posterior, negative_lml, negative_lml_grads
from .data import Dataset, fit_standardizer, split_train_val
from .mlp import MlpParams, MlpSpec, init_params
from .optim import adam_init, adam_step
from .rng import make_rng

__all__ = ["TrainConfig", "TrainHistory", "train"]

HYPER_CLAMP = 15.0


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 20000
    patience: int = 200
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    val_fraction: float | None = 0.2
    log_every: int = 0
    init_log_alpha: float = 0.0
    init_log_sigma_e: float = 0.0

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.val_fraction is not None and not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1) when set")


@dataclass
class TrainHistory:
    """Per-epoch objective curves and the early-stopping winner."""

    train_objective: list[float] = field(default_factory=list)
    val_objective: list[float] | None = None
    best_epoch: int = 0


def fit_loop(leaves, loss_and_grads, cfg: TrainConfig, monitor=None, post_step=None):
    """Generic early-stopped Adam loop shared by every trainer in the package.

    Args:
        leaves: list of parameter arrays (updated functionally).
        loss_and_grads: epoch -> (value, grads) at the current leaves.
        cfg: loop hyperparameters.
        monitor: optional callable giving the early-stopping criterion value
            at the current leaves; defaults to the training objective.
        post_step: optional projection applied to the leaves after each step.

    Returns:
        (best_leaves, history).
    """
    state = adam_init(leaves, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    history = TrainHistory(val_objective=None if monitor is None else [])
    best_value = np.inf
    best_leaves = [a.copy() for a in leaves]
    for epoch in range(cfg.max_epochs):
        try:
            value, grads = loss_and_grads(leaves)
        except NonFiniteLoss as err:
            raise NonFiniteLoss(f"epoch {epoch}: {err}") from err
        history.train_objective.append(value)
        crit = value
        if monitor is not None:
            crit = monitor(leaves)
            history.val_objective.append(crit)
        if crit < best_value:
            best_value = crit
            history.best_epoch = epoch
            best_leaves = [a.copy() for a in leaves]
        elif epoch - history.best_epoch > cfg.patience:
            break
        if cfg.log_every and epoch % cfg.log_every == 0:
            print(f"epoch {epoch}: objective {value:.6f} monitor {crit:.6f}")
        state, leaves = adam_step(state, leaves, grads)
        if post_step is not None:
            leaves = post_step(leaves)
    return best_leaves, history


def standardize_with(data: Dataset, x_scaler, t_scaler) -> Dataset:
    return Dataset(x_scaler.transform(data.x), t_scaler.transform(data.t))


def clamp_hyper_tail(n_hyper_leaves: int):
    """Projection keeping the trailing hyperparameter leaves in a safe box."""

    def post_step(leaves):
        head = leaves[:-n_hyper_leaves]
        tail = [np.clip(a, -HYPER_CLAMP, HYPER_CLAMP) for a in leaves[-n_hyper_leaves:]]
        return head + tail

    return post_step


def train(
    spec: MlpSpec,
    train_data: Dataset,
    cfg: TrainConfig,
    val_data: Dataset | None = None,
) -> tuple[BllModel, TrainHistory]:
    """Train a Bayesian-last-layer network by marginal-likelihood descent.

    Args:
        spec: network architecture (output width must match the targets).
        train_data: training samples in original units.
        cfg: loop configuration; when ``val_data`` is None and
            ``cfg.val_fraction`` is set, a deterministic shuffle split of the
            training data provides the early-stopping monitor.
        val_data: optional explicit validation set for early stopping.

    Returns:
        The fitted model (best monitored epoch) and the training history.
    """
    if spec.output_dim != train_data.n_y or spec.input_dim != train_data.n_x:
        raise ValueError("network spec does not match dataset dimensions")
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
    n_y = train_data.n_y
    leaves = [
        *params0.weights,
        np.asarray(cfg.init_log_alpha, dtype=float),
        np.full(n_y, cfg.init_log_sigma_e, dtype=float),
    ]
    n_w = len(params0.weights)

    def unpack(vals):
        params = MlpParams(tuple(vals[:n_w]), spec.activation)
        hyper = BllHyper(float(vals[n_w]), vals[n_w + 1])
        return params, hyper

    def loss_and_grads(vals):
        params, hyper = unpack(vals)
        value, (w_grads, g_la, g_ls) = negative_lml_grads(params, hyper, fit_std)
        return value, [*w_grads, g_la, g_ls]

    monitor = None
    if val_std is not None:

        def monitor(vals):
            params, hyper = unpack(vals)
            return negative_lml(params, hyper, val_std)

    best, history = fit_loop(
        leaves, loss_and_grads, cfg, monitor=monitor, post_step=clamp_hyper_tail(2)
    )
    params, hyper = unpack(best)
    model = fit_posterior(params, hyper, fit_std, x_scaler=x_scaler, t_scaler=t_scaler)
    return model, history
