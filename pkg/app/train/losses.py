import logging
from dataclasses import dataclass
from typing import Dict, Optional

import torch

from app.exceptions import TrainingDiagnosticError
from app.net.mlp import DTYPE, locate_offending_point
from app.residual.chf import as_complex, eval_chf_residual
from app.residual.fp import eval_transformed_fp
from app.residual.terms import ChfResidual, FpResidual
from app.train.collocation import CollocationSet
from app.train.domain import DomainBox
from app.train.quadrature import TimeSliceQuadrature, norm_ratio_update

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossResult:
    total: torch.Tensor
    components: Dict[str, torch.Tensor]
    residuals: torch.Tensor
    op_points: torch.Tensor

    def as_floats(self) -> Dict[str, float]:
        out = {"total": float(self.total.detach())}
        out.update({name: float(value.detach()) for name, value in self.components.items()})
        return out


def _sq_modulus(z: torch.Tensor) -> torch.Tensor:
    return z.real**2 + z.imag**2


def _finish(components: Dict[str, torch.Tensor], residuals, op_points, ic_errors, ic_points) -> LossResult:
    total = sum(components.values())
    if not bool(torch.isfinite(total.detach())):
        if not bool(torch.isfinite(residuals.detach().abs()).all()) or ic_errors is None:
            point = locate_offending_point(residuals, op_points)
        else:
            point = locate_offending_point(ic_errors, ic_points)
        details = {name: str(float(value.detach())) for name, value in components.items()}
        logger.error("non-finite loss, components %s, point %s", details, point)
        raise TrainingDiagnosticError("loss is not finite", point=point, details=details)
    return LossResult(total=total, components=components, residuals=residuals, op_points=op_points)


def fp_loss(
    field,
    residual: FpResidual,
    colloc: CollocationSet,
    quad: TimeSliceQuadrature,
    v0: torch.Tensor,
) -> LossResult:
    """mean M[v]^2 over operator points + mean (v(x,0) - v0(x))^2 over initial points."""
    op, ic, _ = colloc.tensors()
    cache = norm_ratio_update(field, quad, op[:, -1])
    jet = field.jet(op, residual.transformed_requests())
    residuals = eval_transformed_fp(residual, jet, cache.ratio_at(op[:, -1]))
    ic_errors = field.values(ic)[:, 0] - torch.as_tensor(v0, dtype=DTYPE)
    components = {
        "operator": torch.mean(residuals**2),
        "initial": torch.mean(ic_errors**2),
    }
    return _finish(components, residuals, op, ic_errors, ic)


def chf_loss(
    field,
    residual: ChfResidual,
    colloc: CollocationSet,
    phi0: torch.Tensor,
    box: Optional[DomainBox] = None,
) -> LossResult:
    """mean |Q|^2 + mean |phi(u,0) - phi0(u)|^2 + mean |phi(0,t) - 1|^2."""
    op, ic, origin = colloc.tensors()
    residuals = eval_chf_residual(residual, field, op, box)
    ic_errors = as_complex(field.values(ic)) - torch.as_tensor(phi0, dtype=torch.complex128)
    components = {
        "operator": torch.mean(_sq_modulus(residuals)),
        "initial": torch.mean(_sq_modulus(ic_errors)),
    }
    if origin.shape[0]:
        components["origin"] = torch.mean(_sq_modulus(as_complex(field.values(origin)) - 1.0))
    else:
        components["origin"] = torch.zeros((), dtype=DTYPE)
    return _finish(components, residuals, op, ic_errors, ic)
