import logging

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from app.exceptions import FieldMismatchError, NormalizationError
from app.fields import FieldEstimate, Quantity, tensor_weights

logger = logging.getLogger(__name__)


def _require_real(field: FieldEstimate, what: str) -> None:
    if field.is_complex:
        raise FieldMismatchError(f"{what} needs a real-valued field, got {field.quantity.value}")


def normalize_density(v_field: FieldEstimate) -> FieldEstimate:
    """f = e^{-v} / sum_k w_k e^{-v_k} with the grid's own trapezoid weights."""
    _require_real(v_field, "normalize_density")
    if v_field.quantity is not Quantity.LOG_DENSITY:
        raise FieldMismatchError(f"expected a log_density field, got {v_field.quantity.value}")
    v = v_field.values.reshape(-1).astype(float)
    weights = tensor_weights(v_field.axes)
    log_c = logsumexp(-v, b=weights)
    f = np.exp(-v - log_c)
    if not (np.isfinite(log_c) and np.all(np.isfinite(f))):
        raise NormalizationError(
            "density normalization overflowed",
            v_range=(float(v.min()), float(v.max())),
            total=v.size,
        )
    return v_field.with_values(f, quantity=Quantity.PDF)


def integrate(field: FieldEstimate) -> float:
    """Trapezoid integral of a field over its own grid."""
    return float(np.sum(tensor_weights(field.axes) * field.values.reshape(-1)))


def clip_and_renormalize(pdf_field: FieldEstimate) -> FieldEstimate:
    """Sets negative excursions to zero and rescales to unit mass."""
    _require_real(pdf_field, "clip_and_renormalize")
    clipped = np.clip(pdf_field.values, 0.0, None)
    mass = float(np.sum(tensor_weights(pdf_field.axes) * clipped.reshape(-1)))
    if mass <= 0.0:
        raise NormalizationError("no positive mass left after clipping")
    return pdf_field.with_values(clipped / mass)


def marginalize(field: FieldEstimate, axis: int = -1) -> FieldEstimate:
    """Integrates a real field over one grid axis."""
    _require_real(field, "marginalize")
    if field.dim < 2:
        raise FieldMismatchError("marginalize needs at least two axes")
    axis = axis % field.dim
    values = trapezoid(field.values, x=field.axes[axis], axis=axis)
    axes = tuple(a for k, a in enumerate(field.axes) if k != axis)
    return FieldEstimate(
        axes=axes,
        values=values,
        time=field.time,
        provenance=field.provenance,
        quantity=field.quantity,
        label=field.label,
    )
