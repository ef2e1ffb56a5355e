import logging

import torch

from app.exceptions import CompileError, NormalizationError
from app.net.mlp import DTYPE, locate_offending_point
from app.residual.chf import MAX_DERIVATIVE_ORDER
from app.residual.terms import FpResidual, TermAccumulator, time_index, unit_index
from app.sde.model import SdeModel
from app.sde.polynomial import Polynomial

logger = logging.getLogger(__name__)


def compile_fp(model: SdeModel) -> FpResidual:
    """N[f] = f_t + sum_i d_i(a_i f) - 1/2 sum_ij d_i d_j(B_ij f), product rule expanded."""
    for r in range(model.m_c):
        for k, entry in enumerate(model.jump_column(r)):
            if not entry.is_zero:
                raise CompileError(
                    f"jump_diffusion[{k}][{r}]: the Fokker-Planck route only supports "
                    "Gaussian forcing; use the chf route for jump models"
                )
    d = model.dim
    n = d + 1
    acc = TermAccumulator(d)
    acc.add(time_index(d), Polynomial.constant(d, 1.0))
    zero = (0,) * n

    for i, a_i in enumerate(model.drift):
        if a_i.is_zero:
            continue
        acc.add(zero, a_i.diff(i))
        acc.add(unit_index(n, i), a_i)

    B = model.diffusion_matrix()
    for i in range(d):
        for j in range(d):
            b_ij = B[i][j]
            if b_ij.is_zero:
                continue
            half = -0.5
            acc.add(zero, b_ij.diff(i).diff(j).scale(half))
            acc.add(unit_index(n, i), b_ij.diff(j).scale(half))
            acc.add(unit_index(n, j), b_ij.diff(i).scale(half))
            acc.add(unit_index(n, i, j), b_ij.scale(half))

    residual = FpResidual(
        dim=d,
        terms=tuple(acc.terms()),
        drift=tuple(model.drift),
        diffusion=tuple(tuple(row) for row in B),
    )
    for term in residual.terms:
        if term.order > MAX_DERIVATIVE_ORDER:
            raise CompileError(f"operator term {term.derivative} exceeds order {MAX_DERIVATIVE_ORDER}")
    logger.debug("compiled Fokker-Planck residual with %d terms", len(residual.terms))
    return residual


def eval_fp_residual(residual: FpResidual, field, points) -> torch.Tensor:
    """N[f] for a density network (or any field with jets) at points (x, t)."""
    points = torch.as_tensor(points, dtype=DTYPE)
    x = points[:, : residual.dim]
    jet = field.jet(points, residual.derivative_requests())
    total = torch.zeros(points.shape[0], dtype=DTYPE)
    for term in residual.terms:
        total = total + term.coefficient.evaluate(x) * jet[term.derivative][:, 0]
    return total


def _log_ratio(residual: FpResidual, derivative, jet, norm_ratio):
    """(d^derivative f) / f for f proportional to e^{-v}."""
    n = residual.input_dim
    active = [k for k, e in enumerate(derivative) if e]

    def v(index):
        return jet[index][:, 0]

    if not active:
        return None
    if derivative == time_index(residual.dim):
        return -v(derivative) - norm_ratio
    if sum(derivative) == 1:
        return -v(derivative)
    if sum(derivative) == 2 and residual.dim not in active:
        i, j = (active[0], active[0]) if len(active) == 1 else active
        return v(unit_index(n, i)) * v(unit_index(n, j)) - v(derivative)
    raise CompileError(f"transformed operator has no rule for derivative {derivative}")


def eval_transformed_fp(residual: FpResidual, v_jet, norm_ratio) -> torch.Tensor:
    """N[f] / f for f = e^{-v} / c(t); this is minus the transformed operator M[v].

    norm_ratio is c'(t)/c(t), a scalar or one value per point.
    """
    norm_ratio = torch.as_tensor(norm_ratio, dtype=DTYPE)
    if not bool(torch.isfinite(norm_ratio).all()):
        values = v_jet.value[:, 0].detach()
        raise NormalizationError(
            "normalizer ratio is not finite",
            v_range=(float(values.min()), float(values.max())),
            point=locate_offending_point(values, v_jet.base),
        )
    x = v_jet.base[:, : residual.dim]
    total = torch.zeros(x.shape[0], dtype=DTYPE)
    for term in residual.terms:
        ratio = _log_ratio(residual, term.derivative, v_jet, norm_ratio)
        coefficient = term.coefficient.evaluate(x)
        total = total + (coefficient if ratio is None else coefficient * ratio)
    return total
