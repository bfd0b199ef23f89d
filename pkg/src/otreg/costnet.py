"""Two-layer perceptron mapping a flattened input matrix to a cost matrix.

The hidden layer is ReLU; the output goes through softplus so cost entries
are strictly positive for any parameters. Forward and backward passes are
written out by hand so training does not depend on an autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .matrices import vec

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class CostNetwork:
    """MLP parameters plus the matrix shapes they map between."""

    w1: np.ndarray  # (hidden, in_rows * in_cols)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out_rows * out_cols, hidden)
    b2: np.ndarray  # (out_rows * out_cols,)
    in_shape: tuple[int, int]
    out_shape: tuple[int, int]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_parameters(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_params(self, params: dict[str, np.ndarray]) -> "CostNetwork":
        return CostNetwork(
            w1=params["w1"],
            b1=params["b1"],
            w2=params["w2"],
            b2=params["b2"],
            in_shape=self.in_shape,
            out_shape=self.out_shape,
        )


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_cost_network(
    in_shape: tuple[int, int],
    out_shape: tuple[int, int],
    hidden_dim: int,
    rng: np.random.Generator,
) -> CostNetwork:
    """Glorot-uniform weights, zero biases."""
    if hidden_dim < 1:
        raise DimensionError(f"hidden_dim must be >= 1, got {hidden_dim}")
    d_in = in_shape[0] * in_shape[1]
    d_out = out_shape[0] * out_shape[1]
    return CostNetwork(
        w1=_glorot(rng, hidden_dim, d_in),
        b1=np.zeros(hidden_dim),
        w2=_glorot(rng, d_out, hidden_dim),
        b2=np.zeros(d_out),
        in_shape=tuple(in_shape),
        out_shape=tuple(out_shape),
    )


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def cost_forward_batch(net: CostNetwork, inputs: np.ndarray):
    """Forward pass on flattened inputs of shape (B, in_rows*in_cols).

    Returns cost matrices of shape (B, out_rows, out_cols) and the cache
    needed by :func:`cost_backward_batch`.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.w1.shape[1]:
        raise DimensionError(
            f"expected inputs of shape (B, {net.w1.shape[1]}), got {inputs.shape}"
        )
    z1 = inputs @ net.w1.T + net.b1
    hidden = np.maximum(z1, 0.0)
    z2 = hidden @ net.w2.T + net.b2
    cost = softplus(z2).reshape(inputs.shape[0], *net.out_shape)
    cache = {"inputs": inputs, "z1": z1, "hidden": hidden, "z2": z2}
    return cost, cache


def cost_backward_batch(
    net: CostNetwork, cache: dict, grad_cost: np.ndarray
) -> dict[str, np.ndarray]:
    """Backprop grad_cost (B, out_rows, out_cols) to parameter gradients."""
    batch = grad_cost.shape[0]
    gz2 = grad_cost.reshape(batch, -1) * _sigmoid(cache["z2"])
    grads = {
        "w2": gz2.T @ cache["hidden"],
        "b2": gz2.sum(axis=0),
    }
    ghidden = gz2 @ net.w2
    gz1 = ghidden * (cache["z1"] > 0.0)
    grads["w1"] = gz1.T @ cache["inputs"]
    grads["b1"] = gz1.sum(axis=0)
    return grads


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cost_forward(net: CostNetwork, matrix) -> np.ndarray:
    """Predicted cost matrix for one input matrix."""
    shape = tuple(np.asarray(matrix).shape)
    if shape != net.in_shape:
        raise DimensionError(
            f"input shape {shape} != network input shape {net.in_shape}"
        )
    cost, _ = cost_forward_batch(net, vec(matrix)[None, :])
    return cost[0]


def network_to_dict(net: CostNetwork) -> dict:
    return {
        "in_shape": list(net.in_shape),
        "out_shape": list(net.out_shape),
        "w1": net.w1.tolist(),
        "b1": net.b1.tolist(),
        "w2": net.w2.tolist(),
        "b2": net.b2.tolist(),
    }


def network_from_dict(data: dict) -> CostNetwork:
    return CostNetwork(
        w1=np.asarray(data["w1"], dtype=np.float64),
        b1=np.asarray(data["b1"], dtype=np.float64),
        w2=np.asarray(data["w2"], dtype=np.float64),
        b2=np.asarray(data["b2"], dtype=np.float64),
        in_shape=tuple(data["in_shape"]),
        out_shape=tuple(data["out_shape"]),
    )
