import numpy as np

from app.exceptions import FieldMismatchError
from app.fields import FieldEstimate

GRID_ATOL = 1e-9


def check_compatible(a: FieldEstimate, b: FieldEstimate) -> None:
    if a.quantity is not b.quantity:
        raise FieldMismatchError(
            f"cannot compare a {a.quantity.value} field with a {b.quantity.value} field"
        )
    if a.shape != b.shape:
        raise FieldMismatchError(f"grid shapes differ: {a.shape} vs {b.shape}")
    for k, (x, y) in enumerate(zip(a.axes, b.axes)):
        if not np.allclose(x, y, rtol=0.0, atol=GRID_ATOL):
            raise FieldMismatchError(f"grid axis {k} differs")


def sup_error(a: FieldEstimate, b: FieldEstimate) -> float:
    """max over the grid of |a - b| (modulus for complex fields)."""
    check_compatible(a, b)
    return float(np.max(np.abs(a.values - b.values)))
