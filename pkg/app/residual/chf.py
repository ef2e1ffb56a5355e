"""Characteristic-function residual Q = d/dt phi - (generator terms).

Moments become derivatives through E[X^a e^{iu'X}] = (-i)^{|a|} d^a phi, so a
drift monomial c x^a in component k contributes i^{3+3|a|} c u_k d^a phi and a
monomial c x^a of B_kl = (b b')_kl contributes i^{3|a|} (c/2) u_k u_l d^a phi.
Powers of i are stored as a sign on the coefficient plus an imaginary flag.
"""

import logging
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
import torch

from app.exceptions import CompileError
from app.net.mlp import DTYPE
from app.residual.terms import (
    ChfFactor,
    ChfResidual,
    DilationTerm,
    TermAccumulator,
    time_index,
)
from app.sde.model import SdeModel
from app.sde.polynomial import Polynomial

if TYPE_CHECKING:
    from app.train.domain import DomainBox

logger = logging.getLogger(__name__)

MAX_DERIVATIVE_ORDER = 3
MAX_ACTIVE_COORDS = 2
DEFAULT_QUADRATURE_ORDER = 16

# i^k for k mod 4 as (sign, imaginary)
_PHASES = {0: (1.0, False), 1: (1.0, True), 2: (-1.0, False), 3: (-1.0, True)}


def _check_monomial(exps: Tuple[int, ...], where: str) -> None:
    if sum(exps) > MAX_DERIVATIVE_ORDER:
        raise CompileError(
            f"{where}: monomial with exponents {list(exps)} needs a derivative of order "
            f"{sum(exps)} > {MAX_DERIVATIVE_ORDER}"
        )
    if sum(1 for e in exps if e) > MAX_ACTIVE_COORDS:
        raise CompileError(
            f"{where}: monomial with exponents {list(exps)} couples more than "
            f"{MAX_ACTIVE_COORDS} coordinates"
        )


def _add_moment_terms(
    acc: TermAccumulator,
    poly: Polynomial,
    prefactor: Polynomial,
    phase_offset: int,
    where: str,
) -> None:
    d = poly.dim
    for term in poly.terms:
        _check_monomial(term.exp, where)
        sign, imaginary = _PHASES[(phase_offset + 3 * sum(term.exp)) % 4]
        acc.add(term.exp + (0,), prefactor.scale(sign * term.coef), imaginary)


def _jump_structure(model: SdeModel, r: int) -> Tuple[str, Tuple[float, ...]]:
    """Classify column r as additive (constant entries) or multiplicative (gamma_k x_k)."""
    d = model.dim
    column = model.jump_column(r)
    constants: List[int] = []
    linear: List[int] = []
    values = [0.0] * d
    for k, entry in enumerate(column):
        if entry.is_zero:
            continue
        single = entry.single_term()
        if entry.is_constant:
            constants.append(k)
            values[k] = entry.constant_term
        elif single is not None and single.exp == tuple(1 if j == k else 0 for j in range(d)):
            linear.append(k)
            values[k] = single.coef
        else:
            raise CompileError(
                f"jump_diffusion[{k}][{r}]: only constant entries or gamma * x_{k + 1} are "
                f"supported, got {entry.pretty()}"
            )
    if constants and linear:
        k = max(min(linear), min(constants))
        raise CompileError(
            f"jump_diffusion[{k}][{r}]: column mixes additive and multiplicative entries"
        )
    if not constants and not linear:
        return "zero", tuple(values)
    return ("additive" if constants else "multiplicative"), tuple(values)


def compile_chf(
    model: SdeModel,
    initial=None,
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER,
) -> ChfResidual:
    """Build Q for the model; `initial` only feeds the real-valuedness decision."""
    d = model.dim
    acc = TermAccumulator(d)
    acc.add(time_index(d), Polynomial.constant(d, 1.0))

    for k, a_k in enumerate(model.drift):
        _add_moment_terms(acc, a_k, Polynomial.variable(d, k), 3, f"drift[{k}]")

    B = model.diffusion_matrix()
    for k in range(d):
        for l in range(d):
            if B[k][l].is_zero:
                continue
            prefactor = Polynomial.variable(d, k) * Polynomial.variable(d, l) * 0.5
            _add_moment_terms(acc, B[k][l], prefactor, 0, f"diffusion (b b')[{k}][{l}]")

    dilations: List[DilationTerm] = []
    symmetric_jumps = True
    for r, process in enumerate(model.jumps):
        kind, values = _jump_structure(model, r)
        if kind == "zero":
            continue
        lam = process.intensity
        acc.add((0,) * (d + 1), Polynomial.constant(d, lam))
        if kind == "additive":
            dilations.append(
                DilationTerm(
                    weight=-lam,
                    scale=(1.0,) * d,
                    chf_factor=ChfFactor(law=process.law, direction=values),
                )
            )
            symmetric_jumps = symmetric_jumps and process.law.symmetric
        else:
            nodes, weights = process.law.quadrature(quadrature_order)
            for z, w in zip(nodes, weights):
                dilations.append(
                    DilationTerm(
                        weight=-lam * float(w),
                        scale=tuple(1.0 + g * float(z) for g in values),
                    )
                )

    terms = acc.terms()
    no_imaginary = not any(t.imaginary for t in terms)
    initial_symmetric = True if initial is None else bool(initial.symmetric)
    residual = ChfResidual(
        dim=d,
        deriv_terms=tuple(t for t in terms if any(t.derivative)),
        multiplicative_terms=tuple(t for t in terms if not any(t.derivative)),
        dilation_terms=tuple(dilations),
        is_real_valued=no_imaginary and symmetric_jumps and initial_symmetric,
    )
    logger.debug(
        "compiled chf residual: %d derivative, %d multiplicative, %d dilation terms",
        len(residual.deriv_terms),
        len(residual.multiplicative_terms),
        len(residual.dilation_terms),
    )
    return residual


def as_complex(values: torch.Tensor) -> torch.Tensor:
    """Network output (N, 1) or (N, 2) as a complex128 column."""
    real = values[..., 0]
    imag = values[..., 1] if values.shape[-1] > 1 else torch.zeros_like(real)
    return torch.complex(real, imag)


def eval_chf_residual(
    residual: ChfResidual,
    field,
    points,
    box: Optional["DomainBox"] = None,
) -> torch.Tensor:
    """Pointwise complex Q at points (u_1..u_d, t).

    Dilation terms read the field at scaled frequencies and use 0 wherever the
    scaled point leaves the box.
    """
    points = torch.as_tensor(points, dtype=DTYPE)
    d = residual.dim
    u = points[:, :d]
    jet = field.jet(points, residual.derivative_requests())

    total = torch.zeros(points.shape[0], dtype=torch.complex128)
    for term in residual.linear_terms():
        value = as_complex(jet[term.derivative]) * term.coefficient.evaluate(u)
        total = total + (1j * value if term.imaginary else value)

    u_np = u.detach().numpy()
    for term in residual.dilation_terms:
        if term.is_identity:
            phi = as_complex(jet.value)
        else:
            scale = torch.tensor(term.scale, dtype=DTYPE)
            mapped = torch.cat([u * scale, points[:, d:]], dim=1)
            phi = as_complex(field.values(mapped))
            if box is not None:
                lower = torch.tensor(box.lower, dtype=DTYPE)
                upper = torch.tensor(box.upper, dtype=DTYPE)
                inside = torch.all((mapped[:, :d] >= lower) & (mapped[:, :d] <= upper), dim=1)
                phi = torch.where(inside, phi, torch.zeros_like(phi))
        contribution = term.weight * phi
        if term.chf_factor is not None:
            s = u_np @ np.asarray(term.chf_factor.direction)
            factor = torch.as_tensor(term.chf_factor.law.chf(s), dtype=torch.complex128)
            contribution = contribution * factor
        total = total + contribution
    return total
