"""Feed-forward network: evaluation and feature extraction.

Layers compute ``[a, 1] @ W`` followed by an activation; the bias lives in
the last row of each weight matrix.  The output layer is always linear, so
the activations of the last hidden layer act as a learned feature map and
the final weight matrix is a linear regression on those features.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["MlpSpec", "MlpParams", "init_params", "forward", "forward_batch", "features"]

_ACTIVATIONS = {
    "tanh": np.tanh,
    "relu": lambda h: np.maximum(h, 0.0),
}


@dataclass(frozen=True)
class MlpSpec:
    """Network shape: input width, hidden widths, output width."""

    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if len(self.hidden) < 1:
            raise ValueError("at least one hidden layer is required")
        if min(self.hidden) < 1 or self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_linear_features(self) -> int:
        """Width of the last hidden layer."""
        return self.hidden[-1]

    @property
    def n_features(self) -> int:
        """Width of the affine feature vector (last hidden layer plus bias)."""
        return self.hidden[-1] + 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.output_dim]
        return [(dims[i] + 1, dims[i + 1]) for i in range(len(dims) - 1)]


@dataclass(frozen=True)
class MlpParams:
    """Weight matrices, one per layer, each including its bias row."""

    weights: tuple[np.ndarray, ...]
    activation: str = "tanh"

    @property
    def wbar(self) -> np.ndarray:
        """Output-layer weights (the regression on the learned features)."""
        return self.weights[-1]

    def replace_wbar(self, wbar: np.ndarray) -> "MlpParams":
        if wbar.shape != self.weights[-1].shape:
            raise ValueError("output layer shape mismatch")
        return MlpParams((*self.weights[:-1], wbar), self.activation)


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Glorot-normal weights, scale sqrt(2 / (fan_in + fan_out)); zero biases."""
    weights = []
    for rows, cols in spec.layer_shapes():
        fan_in = rows - 1
        scale = np.sqrt(2.0 / (fan_in + cols))
        w = np.zeros((rows, cols))
        w[:-1] = scale * rng.standard_normal((fan_in, cols))
        weights.append(w)
    return MlpParams(tuple(weights), spec.activation)


def forward_batch(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the network on rows of ``x``.

    Returns the outputs (m, n_y) and the linear features (m, n_phi_tilde),
    i.e. the last hidden activations that feed the linear output layer.
    """
    act = _ACTIVATIONS[params.activation]
    a = np.asarray(x, dtype=float)
    for w in params.weights[:-1]:
        a = act(a @ w[:-1] + w[-1])
    w = params.weights[-1]
    return a @ w[:-1] + w[-1], a


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-point evaluation: returns (y, phi_tilde) as flat vectors."""
    y, phi = forward_batch(params, np.asarray(x, dtype=float).reshape(1, -1))
    return y[0], phi[0]


def features(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Affine feature matrix: one row [phi_tilde(x_i), 1] per sample."""
    _, phi = forward_batch(params, x)
    return np.concatenate([phi, np.ones((phi.shape[0], 1))], axis=1)
