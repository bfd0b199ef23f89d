"""Marginal estimation: classical vector regressors built in-repo.

Two backends, both fitting one independent scalar model per output
coordinate:

- random forest of CART trees split on variance reduction
- epsilon-SVR trained by pairwise dual coordinate ascent (SMO) on the
  doubled-variable formulation, with linear or RBF kernel

Both expose ``fit(X, Y)`` / ``predict(x)`` with vector targets and
round-trip through plain dicts for model serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Protocol, runtime_checkable

import numpy as np

from .exceptions import ConfigError, DimensionError
from .matrices import MarginalPair, MatrixSample, marginals_of, normalize_marginals, vec


@runtime_checkable
class Regressor(Protocol):
    """Vector regressor: fit on (N, d) inputs and (N, k) targets."""

    def fit(self, inputs: np.ndarray, targets: np.ndarray) -> "Regressor": ...

    def predict(self, x: np.ndarray) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 2
    features_per_split: int | None = None  # None: ceil(d / 3)
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")


class _Tree:
    """CART regression tree stored as parallel arrays.

    ``feature[i] == -1`` marks a leaf with prediction ``value[i]``.
    """

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def fit(self, X: np.ndarray, y: np.ndarray, cfg: RandomForestConfig, rng):
        n, d = X.shape
        k = cfg.features_per_split or max(1, math.ceil(d / 3))
        k = min(k, d)
        stack = [(self._new_node(), np.arange(n), 0)]
        while stack:
            node, idx, depth = stack.pop()
            y_node = y[idx]
            self.value[node] = float(y_node.mean())
            if (
                idx.size < 2 * cfg.min_samples_leaf
                or (cfg.max_depth is not None and depth >= cfg.max_depth)
                or np.ptp(y_node) == 0.0
            ):
                continue
            split = self._best_split(X, y_node, idx, k, cfg.min_samples_leaf, rng, d)
            if split is None:
                continue
            feature, threshold = split
            self.feature[node] = feature
            self.threshold[node] = threshold
            mask = X[idx, feature] <= threshold
            left = self._new_node()
            right = self._new_node()
            self.left[node] = left
            self.right[node] = right
            stack.append((left, idx[mask], depth + 1))
            stack.append((right, idx[~mask], depth + 1))
        return self

    def _best_split(self, X, y_node, idx, k, min_leaf, rng, d):
        sampled = rng.choice(d, size=k, replace=False)
        best = self._scan_features(X, y_node, idx, sampled, min_leaf)
        if best is None and k < d:
            # Sampled features were all constant on this node; widen the
            # search so distinct rows can always be separated.
            rest = np.setdiff1d(np.arange(d), sampled)
            best = self._scan_features(X, y_node, idx, rest, min_leaf)
        return best

    @staticmethod
    def _scan_features(X, y_node, idx, features, min_leaf):
        n = idx.size
        best_score = np.inf
        best = None
        for feature in features:
            x = X[idx, feature]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            ys = y_node[order]
            boundary = xs[:-1] < xs[1:]
            if min_leaf > 1:
                boundary = boundary.copy()
                boundary[: min_leaf - 1] = False
                boundary[n - min_leaf :] = False
            positions = np.nonzero(boundary)[0]
            if positions.size == 0:
                continue
            cs = np.cumsum(ys)
            cs2 = np.cumsum(ys * ys)
            n_left = positions + 1.0
            n_right = n - n_left
            sse_left = cs2[positions] - cs[positions] ** 2 / n_left
            sse_right = (cs2[-1] - cs2[positions]) - (cs[-1] - cs[positions]) ** 2 / n_right
            scores = sse_left + sse_right
            p = int(np.argmin(scores))
            if scores[p] < best_score:
                best_score = scores[p]
                pos = positions[p]
                best = (int(feature), float(0.5 * (xs[pos] + xs[pos + 1])))
        return best

    def predict(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "_Tree":
        tree = cls()
        tree.feature = [int(v) for v in data["feature"]]
        tree.threshold = [float(v) for v in data["threshold"]]
        tree.left = [int(v) for v in data["left"]]
        tree.right = [int(v) for v in data["right"]]
        tree.value = [float(v) for v in data["value"]]
        return tree


class RandomForestRegressor:
    """Forest of CART trees; one independent forest per output coordinate."""

    def __init__(self, config: RandomForestConfig | None = None):
        self.config = config or RandomForestConfig()
        self._forests: list[list[_Tree]] = []
        self.n_outputs = 0

    def fit(self, inputs: np.ndarray, targets: np.ndarray) -> "RandomForestRegressor":
        X = np.asarray(inputs, dtype=np.float64)
        Y = np.asarray(targets, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise DimensionError("inputs and targets disagree on sample count")
        n = X.shape[0]
        self.n_outputs = Y.shape[1]
        master = np.random.SeedSequence(self.config.seed)
        self._forests = []
        for coord, coord_seed in enumerate(master.spawn(self.n_outputs)):
            trees = []
            for tree_seed in coord_seed.spawn(self.config.n_trees):
                rng = np.random.default_rng(tree_seed)
                rows = rng.integers(0, n, size=n) if self.config.bootstrap else np.arange(n)
                trees.append(_Tree().fit(X[rows], Y[rows, coord], self.config, rng))
            self._forests.append(trees)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.array(
            [np.mean([t.predict(x) for t in trees]) for trees in self._forests]
        )

    def to_dict(self) -> dict:
        return {
            "kind": "random_forest",
            "config": asdict(self.config),
            "forests": [[t.to_dict() for t in trees] for trees in self._forests],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RandomForestRegressor":
        cfg = data["config"]
        model = cls(RandomForestConfig(**cfg))
        model._forests = [
            [_Tree.from_dict(t) for t in trees] for trees in data["forests"]
        ]
        model.n_outputs = len(model._forests)
        return model


# ---------------------------------------------------------------------------
# Support vector regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvrConfig:
    kernel: str = "rbf"
    gamma: float | None = None  # None: 1 / n_features
    c_reg: float = 1.0
    epsilon_tube: float = 0.1
    max_passes: int = 100
    tol: float = 1e-3

    def __post_init__(self):
        if self.kernel not in ("rbf", "linear"):
            raise ConfigError(f"kernel must be 'rbf' or 'linear', got {self.kernel!r}")
        if self.c_reg <= 0:
            raise ConfigError("c_reg must be positive")
        if self.epsilon_tube < 0:
            raise ConfigError("epsilon_tube must be non-negative")


def _kernel_matrix(cfg: SvrConfig, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    if cfg.kernel == "linear":
        return X @ Z.T
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / X.shape[1]
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Z * Z, axis=1)[None, :]
        - 2.0 * X @ Z.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _smo_solve(K: np.ndarray, z: np.ndarray, cfg: SvrConfig) -> tuple[np.ndarray, float]:
    """Pairwise dual ascent on the doubled-variable epsilon-SVR dual.

    Variables a = [alpha; alpha*] with signs y = [+1...; -1...] solve
    min 1/2 a^T Q a + p^T a  s.t.  y^T a = 0, 0 <= a <= C, where
    Q = (y y^T) * [[K, K], [K, K]]. Returns beta = alpha - alpha* and the
    bias term.
    """
    l = z.size
    C = cfg.c_reg
    y = np.concatenate([np.ones(l), -np.ones(l)])
    p = np.concatenate([cfg.epsilon_tube - z, cfg.epsilon_tube + z])
    Q = np.block([[K, -K], [-K, K]])
    a = np.zeros(2 * l)
    grad = p.copy()
    for _ in range(cfg.max_passes * l):
        yg = y * grad
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
        neg_yg = -yg
        i = int(np.flatnonzero(up)[np.argmax(neg_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(neg_yg[low])])
        if neg_yg[i] - neg_yg[j] < cfg.tol:
            break
        eta = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
        slope = yg[i] - yg[j]
        # Step a_i += y_i * t, a_j -= y_j * t keeps the equality constraint.
        lo_i, hi_i = (-a[i], C - a[i]) if y[i] > 0 else (a[i] - C, a[i])
        lo_j, hi_j = (a[j] - C, a[j]) if y[j] > 0 else (-a[j], C - a[j])
        t_lo, t_hi = max(lo_i, lo_j), min(hi_i, hi_j)
        if eta > 1e-12:
            t = np.clip(-slope / eta, t_lo, t_hi)
        else:
            t = t_lo if slope > 0 else t_hi
        if t == 0.0:
            break
        a[i] += y[i] * t
        a[j] -= y[j] * t
        grad += Q[:, i] * (y[i] * t) - Q[:, j] * (y[j] * t)
    yg = y * grad
    free = (a > 1e-12) & (a < C - 1e-12)
    if np.any(free):
        rho = float(yg[free].mean())
    else:
        upper = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        lower = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
        hi = yg[upper].min() if np.any(upper) else 0.0
        lo = yg[lower].max() if np.any(lower) else 0.0
        rho = float(0.5 * (hi + lo))
    beta = a[:l] - a[l:]
    return beta, -rho


class SupportVectorRegressor:
    """Epsilon-SVR; one independent scalar SMO fit per output coordinate."""

    def __init__(self, config: SvrConfig | None = None):
        self.config = config or SvrConfig()
        self._x_train: np.ndarray | None = None
        self._betas: list[np.ndarray] = []
        self._biases: list[float] = []
        self.n_outputs = 0

    def fit(self, inputs: np.ndarray, targets: np.ndarray) -> "SupportVectorRegressor":
        X = np.asarray(inputs, dtype=np.float64)
        Y = np.asarray(targets, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise DimensionError("inputs and targets disagree on sample count")
        self._x_train = X
        self.n_outputs = Y.shape[1]
        K = _kernel_matrix(self.config, X, X)
        self._betas, self._biases = [], []
        for coord in range(self.n_outputs):
            beta, bias = _smo_solve(K, Y[:, coord], self.config)
            self._betas.append(beta)
            self._biases.append(bias)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        k = _kernel_matrix(self.config, np.asarray(x, dtype=np.float64)[None, :], self._x_train)[0]
        return np.array(
            [k @ beta + bias for beta, bias in zip(self._betas, self._biases)]
        )

    def to_dict(self) -> dict:
        return {
            "kind": "svr",
            "config": asdict(self.config),
            "x_train": self._x_train.tolist(),
            "betas": [b.tolist() for b in self._betas],
            "biases": self._biases,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SupportVectorRegressor":
        model = cls(SvrConfig(**data["config"]))
        model._x_train = np.asarray(data["x_train"], dtype=np.float64)
        model._betas = [np.asarray(b, dtype=np.float64) for b in data["betas"]]
        model._biases = [float(b) for b in data["biases"]]
        model.n_outputs = len(model._betas)
        return model


# ---------------------------------------------------------------------------
# Marginal estimation on top of the regressors
# ---------------------------------------------------------------------------


def make_regressor(config) -> Regressor:
    if isinstance(config, RandomForestConfig):
        return RandomForestRegressor(config)
    if isinstance(config, SvrConfig):
        return SupportVectorRegressor(config)
    raise ConfigError(f"unknown regressor config type: {type(config).__name__}")


def regressor_from_dict(data: dict) -> Regressor:
    if data["kind"] == "random_forest":
        return RandomForestRegressor.from_dict(data)
    if data["kind"] == "svr":
        return SupportVectorRegressor.from_dict(data)
    raise ConfigError(f"unknown regressor kind: {data['kind']!r}")


def fit_marginal_regressor(
    samples: list[MatrixSample], config, axis: str
) -> Regressor:
    """Fit one vector regressor mapping vec(input) to target marginals."""
    if not samples:
        raise DimensionError("cannot fit marginal regressors on an empty dataset")
    if any(s.target is None for s in samples):
        raise DimensionError("all samples need targets to fit marginal regressors")
    if axis not in ("row", "col"):
        raise ConfigError(f"axis must be 'row' or 'col', got {axis!r}")
    X = np.stack([vec(s.input) for s in samples])
    targets = np.stack(
        [getattr(marginals_of(s.target), axis) for s in samples]
    )
    return make_regressor(config).fit(X, targets)


def fit_me(samples: list[MatrixSample], config) -> tuple[Regressor, Regressor]:
    """Fit the row- and column-marginal regressors on flattened inputs."""
    return (
        fit_marginal_regressor(samples, config, "row"),
        fit_marginal_regressor(samples, config, "col"),
    )


def predict_marginals(
    row_model: Regressor, col_model: Regressor, input_matrix
) -> tuple[MarginalPair, float]:
    """Predict, clip at zero, reconcile and normalize the marginals.

    Raises
    ------
    DegenerateMarginalError
        If either predicted vector is all zero after clipping; callers fall
        back to uniform marginals.
    """
    flat = vec(input_matrix)
    row = np.maximum(row_model.predict(flat), 0.0)
    col = np.maximum(col_model.predict(flat), 0.0)
    raw = MarginalPair(row=row, col=col, mass=0.5 * float(row.sum() + col.sum()))
    return normalize_marginals(raw)


def me_mse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared error between two equal-length vectors."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))
