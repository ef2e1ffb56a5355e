from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from app.exceptions import FieldMismatchError


class Provenance(str, Enum):
    NETWORK = "network"
    MONTE_CARLO = "monte_carlo"
    ANALYTIC = "analytic"


class Quantity(str, Enum):
    PDF = "pdf"
    CHF = "chf"
    LOG_DENSITY = "log_density"


@dataclass(frozen=True)
class FieldEstimate:
    """Values of a pdf, chf or log-density on a regular tensor grid at one time."""

    axes: Tuple[np.ndarray, ...]
    values: np.ndarray
    time: float
    provenance: Provenance
    quantity: Quantity
    label: str = ""

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", np.asarray(self.values))
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        object.__setattr__(self, "quantity", Quantity(self.quantity))
        shape = tuple(len(a) for a in axes)
        if self.values.shape != shape:
            raise FieldMismatchError(f"values shape {self.values.shape} != grid shape {shape}")
        for k, axis in enumerate(axes):
            if len(axis) < 2:
                continue
            steps = np.diff(axis)
            if np.any(steps <= 0):
                raise FieldMismatchError(f"axis {k} is not strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-8, atol=0.0):
                raise FieldMismatchError(f"axis {k} is not regular")
        if not np.all(np.isfinite(self.values)):
            raise FieldMismatchError("field values must be finite")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def mesh(self) -> np.ndarray:
        """Grid nodes as an (N, dim) array in row-major ("ij") order."""
        return mesh_of(self.axes)

    def with_values(
        self,
        values,
        provenance: Optional[Provenance] = None,
        quantity: Optional[Quantity] = None,
        label: Optional[str] = None,
    ) -> "FieldEstimate":
        return replace(
            self,
            values=np.asarray(values).reshape(self.shape),
            provenance=provenance or self.provenance,
            quantity=quantity or self.quantity,
            label=self.label if label is None else label,
        )


def mesh_of(axes: Sequence[np.ndarray]) -> np.ndarray:
    grids = np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1)


def trapezoid_weights(axis) -> np.ndarray:
    """Composite trapezoid weights of a regular 1-D grid."""
    axis = np.asarray(axis, dtype=float)
    if axis.size < 2:
        return np.ones_like(axis)
    weights = np.full(axis.size, axis[1] - axis[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return weights


def tensor_weights(axes: Sequence[np.ndarray]) -> np.ndarray:
    """Product trapezoid weights flattened in mesh_of order."""
    weights = np.ones(1)
    for axis in axes:
        weights = np.multiply.outer(weights, trapezoid_weights(axis)).reshape(-1)
    return weights
