"""Dense matrix primitives and marginal bookkeeping.

All matrices are 2-D float64 ndarrays in row-major (C) order; ``vec`` and
``mat`` fix the flattening convention used everywhere else. Marginals are
carried around as :class:`MarginalPair` values in raw units until
:func:`normalize_marginals` rescales them to probability vectors for the
transport solvers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateMarginalError, DimensionError, NegativeTargetError

# Negative entries with magnitude at or below this are treated as float
# noise and clipped to zero; anything larger is a hard error.
NEGATIVE_CLIP_TOL = 1e-12


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``data`` to a read-only 2-D float64 array.

    Raises
    ------
    DimensionError
        If the array is not 2-D or has a zero-length axis.
    ValueError
        If any entry is NaN or infinite.
    """
    arr = np.array(data, dtype=np.float64, order="C")
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have positive shape, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


def as_vector(data, name: str = "vector") -> np.ndarray:
    """Validate and convert ``data`` to a read-only 1-D float64 array."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if arr.size < 1:
        raise DimensionError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


def vec(m) -> np.ndarray:
    """Flatten a matrix to a vector in row-major order."""
    return as_matrix(m).ravel(order="C").copy()


def mat(v, rows: int, cols: int) -> np.ndarray:
    """Reshape a vector back to a ``rows`` x ``cols`` matrix (inverse of vec)."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected 1-D vector, got ndim={arr.ndim}")
    if rows < 1 or cols < 1:
        raise DimensionError(f"rows and cols must be positive, got {rows}x{cols}")
    if arr.size != rows * cols:
        raise DimensionError(
            f"vector of length {arr.size} cannot fill a {rows}x{cols} matrix"
        )
    return as_matrix(arr.reshape(rows, cols))


@dataclass(frozen=True)
class MarginalPair:
    """Row-sum and column-sum vectors of a target matrix plus total mass.

    Entries are non-negative; ``mass`` is the total the pair accounts for.
    Row and column sums are only guaranteed to agree after
    :func:`normalize_marginals`.
    """

    row: np.ndarray
    col: np.ndarray
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "row", as_vector(self.row, "row marginal"))
        object.__setattr__(self, "col", as_vector(self.col, "col marginal"))
        if np.any(self.row < 0) or np.any(self.col < 0):
            raise NegativeTargetError("marginal entries must be non-negative")
        if self.mass < 0:
            raise NegativeTargetError(f"mass must be non-negative, got {self.mass}")


@dataclass(frozen=True)
class MatrixSample:
    """One (input, target) pair; ``target`` is None for inference-only inputs."""

    input: np.ndarray
    target: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "input", as_matrix(self.input, "input"))
        if self.target is not None:
            object.__setattr__(self, "target", as_matrix(self.target, "target"))


def clip_negatives(arr: np.ndarray, name: str = "target") -> np.ndarray:
    """Zero out float-noise negatives; raise on anything genuinely negative."""
    arr = np.asarray(arr, dtype=np.float64)
    low = arr.min() if arr.size else 0.0
    if low < -NEGATIVE_CLIP_TOL:
        raise NegativeTargetError(
            f"{name} has negative entry {low:.3e}; transport plans cannot "
            "represent negative mass"
        )
    if low < 0.0:
        warnings.warn(
            f"{name}: clipping negative float noise (min {low:.3e}) to zero",
            stacklevel=2,
        )
        arr = np.maximum(arr, 0.0)
    return arr


def marginals_of(m) -> MarginalPair:
    """Row sums, column sums and total mass of a non-negative matrix."""
    arr = clip_negatives(as_matrix(m, "target"), "target")
    row = arr.sum(axis=1)
    col = arr.sum(axis=0)
    return MarginalPair(row=row, col=col, mass=float(arr.sum()))


def normalize_marginals(pair: MarginalPair) -> tuple[MarginalPair, float]:
    """Rescale a marginal pair so each vector sums to one.

    When the row and column totals disagree (independently predicted
    marginals), the reconciled mass is their symmetric mean and each vector
    is renormalized to sum to one on its own. The returned ``scale`` is the
    mass by which a unit-mass transport plan must be multiplied to recover
    original units.

    Raises
    ------
    DegenerateMarginalError
        If either vector has non-positive total mass.
    """
    row_sum = float(pair.row.sum())
    col_sum = float(pair.col.sum())
    if row_sum <= 0.0 or col_sum <= 0.0:
        raise DegenerateMarginalError(
            f"cannot normalize marginals with totals row={row_sum} col={col_sum}"
        )
    scale = 0.5 * (row_sum + col_sum)
    normalized = MarginalPair(row=pair.row / row_sum, col=pair.col / col_sum, mass=1.0)
    return normalized, scale
