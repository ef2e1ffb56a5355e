import json
from typing import List, Union

from pydantic import ValidationError

from app.exceptions import ConfigurationError
from app.residual.terms import ChfResidual, DerivTerm, DilationTerm, FpResidual

Residual = Union[ChfResidual, FpResidual]

_KINDS = {"chf": ChfResidual, "fokker_planck": FpResidual}


def _derivative_label(derivative, dim: int, var: str) -> str:
    parts = []
    for k, e in enumerate(derivative):
        if not e:
            continue
        name = "t" if k == dim else f"{var}{k + 1}"
        parts.append(name if e == 1 else f"{name}^{e}")
    return "d[" + " ".join(parts) + "]" if parts else ""


def _format_deriv(term: DerivTerm, dim: int, var: str, field: str) -> str:
    coefficient = term.coefficient.pretty(var)
    factor = "I*" if term.imaginary else ""
    target = _derivative_label(term.derivative, dim, var)
    target = f"{target} {field}" if target else field
    return f"  + {factor}({coefficient}) * {target}"


def _format_dilation(term: DilationTerm, var: str) -> str:
    scaled = ", ".join(f"{s:.6g}*{var}{k + 1}" for k, s in enumerate(term.scale))
    text = f"  + ({term.weight:.6g}) * phi({scaled}, t)"
    if term.chf_factor is not None:
        direction = " + ".join(
            f"{c:.6g}*{var}{k + 1}" for k, c in enumerate(term.chf_factor.direction) if c
        )
        text += f" * phi_Y[{term.chf_factor.law.kind}]({direction})"
    return text


def format_residual(residual: Residual) -> str:
    """Readable term list: one line per term, sympy-printed coefficients."""
    lines: List[str] = []
    if isinstance(residual, ChfResidual):
        lines.append(
            f"Q[phi] (dim={residual.dim}, real-valued={residual.is_real_valued}) ="
        )
        for term in residual.deriv_terms + residual.multiplicative_terms:
            lines.append(_format_deriv(term, residual.dim, "u", "phi"))
        for term in residual.dilation_terms:
            lines.append(_format_dilation(term, "u"))
    else:
        lines.append(f"N[f] (dim={residual.dim}) =")
        for term in residual.terms:
            lines.append(_format_deriv(term, residual.dim, "x", "f"))
    return "\n".join(lines)


def residual_to_json(residual: Residual, indent: int = 2) -> str:
    kind = "chf" if isinstance(residual, ChfResidual) else "fokker_planck"
    return json.dumps(
        {"kind": kind, "residual": residual.model_dump(mode="python")}, indent=indent
    )


def residual_from_json(text: str) -> Residual:
    try:
        document = json.loads(text)
        model = _KINDS[document["kind"]]
        return model.model_validate(document["residual"])
    except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
        raise ConfigurationError(f"cannot parse residual document: {e}") from e
