import logging
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from app.exceptions import EstimatorError, FieldMismatchError
from app.fields import FieldEstimate, Quantity, trapezoid_weights

logger = logging.getLogger(__name__)

EDGE_MODULUS_WARNING = 0.05
MAX_IMAG_RESIDUE = 1e-3
CONJUGATE_TOL = 1e-8
X_CHUNK = 512


@dataclass(frozen=True)
class InversionReport:
    imag_residue: float
    conjugate_symmetric: bool
    edge_modulus: float
    min_value: float
    negative_mass: float

    def as_dict(self) -> dict:
        return asdict(self)


def _check_symmetric(u: np.ndarray) -> None:
    scale = max(abs(u[0]), abs(u[-1]), 1.0)
    if not np.allclose(u, -u[::-1], rtol=0.0, atol=1e-9 * scale):
        raise FieldMismatchError(
            f"inversion needs a u-grid symmetric about 0, got [{u[0]:g}, {u[-1]:g}]"
        )


def fourier_invert_1d(chf_field: FieldEstimate, x_grid) -> Tuple[FieldEstimate, InversionReport]:
    """f(x) = (1/2pi) sum_j w_j e^{-i u_j x} phi(u_j), trapezoid weights on the u-grid.

    Negative values are reported, not clipped; see clip_and_renormalize.
    A constant chf gives the Dirichlet kernel of the grid, not a density.
    """
    if chf_field.quantity is not Quantity.CHF or chf_field.dim != 1:
        raise FieldMismatchError("fourier_invert_1d needs a 1-D chf field")
    u = chf_field.axes[0]
    _check_symmetric(u)
    phi = chf_field.values.astype(complex)
    x = np.asarray(x_grid, dtype=float).reshape(-1)

    edge = float(max(abs(phi[0]), abs(phi[-1])))
    if edge > EDGE_MODULUS_WARNING:
        logger.warning(
            "chf modulus %.3g at the ends of the u-grid; the inversion will ring", edge
        )

    weighted = trapezoid_weights(u) * phi
    values = np.empty(x.size, dtype=complex)
    for start in range(0, x.size, X_CHUNK):
        block = x[start : start + X_CHUNK]
        values[start : start + X_CHUNK] = np.exp(-1j * np.outer(block, u)) @ weighted
    values /= 2.0 * np.pi

    conjugate = bool(np.allclose(phi[::-1], np.conj(phi), rtol=0.0, atol=CONJUGATE_TOL))
    residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if conjugate and residue > MAX_IMAG_RESIDUE:
        raise EstimatorError(
            f"imaginary residue {residue:.3g} of a conjugate-symmetric chf exceeds {MAX_IMAG_RESIDUE:g}"
        )
    real = values.real
    negative = np.clip(real, None, 0.0)
    negative_mass = float(-np.sum(trapezoid_weights(x) * negative)) if x.size > 1 else 0.0
    report = InversionReport(
        imag_residue=residue,
        conjugate_symmetric=conjugate,
        edge_modulus=edge,
        min_value=float(real.min()) if real.size else 0.0,
        negative_mass=negative_mass,
    )
    if report.min_value < 0.0:
        logger.info(
            "inverted pdf dips to %.3g (negative mass %.3g)", report.min_value, negative_mass
        )
    field = FieldEstimate(
        axes=(x,),
        values=real,
        time=chf_field.time,
        provenance=chf_field.provenance,
        quantity=Quantity.PDF,
        label=chf_field.label,
    )
    return field, report
