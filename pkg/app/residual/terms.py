from typing import Dict, List, Optional, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.sde.distributions import JumpDist
from app.sde.polynomial import Polynomial

MultiIndex = Tuple[int, ...]
TermKey = Tuple[MultiIndex, bool]


class DerivTerm(BaseModel):
    """coefficient(u) * [i if imaginary] * d^derivative field, derivative over (coords..., t)."""

    model_config = ConfigDict(frozen=True)

    derivative: Tuple[int, ...]
    coefficient: Polynomial
    imaginary: bool = False

    @property
    def order(self) -> int:
        return sum(self.derivative)


class ChfFactor(BaseModel):
    """phi_Y(direction . u) for the jump-size law Y."""

    model_config = ConfigDict(frozen=True)

    law: JumpDist
    direction: Tuple[float, ...]


class DilationTerm(BaseModel):
    """weight * [phi_Y(c'u)] * phi(scale * u, t)."""

    model_config = ConfigDict(frozen=True)

    weight: float
    scale: Tuple[float, ...]
    chf_factor: Optional[ChfFactor] = None

    @property
    def is_identity(self) -> bool:
        return all(s == 1.0 for s in self.scale)


class ChfResidual(BaseModel):
    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    deriv_terms: Tuple[DerivTerm, ...] = ()
    multiplicative_terms: Tuple[DerivTerm, ...] = ()
    dilation_terms: Tuple[DilationTerm, ...] = ()
    is_real_valued: bool = False

    @property
    def input_dim(self) -> int:
        return self.dim + 1

    def linear_terms(self) -> Tuple[DerivTerm, ...]:
        return self.deriv_terms + self.multiplicative_terms

    def derivative_requests(self) -> Set[MultiIndex]:
        return {t.derivative for t in self.linear_terms()}

    def canonical_terms(self, ndigits: int = 10):
        return canonical_terms(self, ndigits)


class FpResidual(BaseModel):
    """Fokker-Planck operator N[f] plus the drift and B = b b' it came from."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    terms: Tuple[DerivTerm, ...] = ()
    drift: Tuple[Polynomial, ...] = ()
    diffusion: Tuple[Tuple[Polynomial, ...], ...] = ()

    @property
    def input_dim(self) -> int:
        return self.dim + 1

    def linear_terms(self) -> Tuple[DerivTerm, ...]:
        return self.terms

    def derivative_requests(self) -> Set[MultiIndex]:
        return {t.derivative for t in self.terms}

    def transformed_requests(self) -> Set[MultiIndex]:
        """v-derivatives needed to evaluate N[e^{-v}] / e^{-v}."""
        requests: Set[MultiIndex] = set()
        for term in self.terms:
            active = [k for k, e in enumerate(term.derivative) if e]
            requests.add(term.derivative)
            for k in active:
                unit = [0] * self.input_dim
                unit[k] = 1
                requests.add(tuple(unit))
        return requests

    def canonical_terms(self, ndigits: int = 10):
        return canonical_terms(self, ndigits)


def unit_index(size: int, *coords: int) -> MultiIndex:
    index = [0] * size
    for k in coords:
        index[k] += 1
    return tuple(index)


def time_index(dim: int) -> MultiIndex:
    return unit_index(dim + 1, dim)


class TermAccumulator:
    """Sums polynomial coefficients per (derivative, imaginary) key."""

    def __init__(self, dim: int):
        self.dim = dim
        self._terms: Dict[TermKey, Polynomial] = {}

    def add(self, derivative: MultiIndex, coefficient: Polynomial, imaginary: bool = False) -> None:
        if coefficient.is_zero:
            return
        key = (tuple(derivative), bool(imaginary))
        current = self._terms.get(key)
        self._terms[key] = coefficient if current is None else current + coefficient

    def terms(self) -> List[DerivTerm]:
        return [
            DerivTerm(derivative=derivative, coefficient=poly, imaginary=imaginary)
            for (derivative, imaginary), poly in sorted(self._terms.items())
            if not poly.is_zero
        ]


def canonical_terms(residual, ndigits: int = 10):
    """Order-free, rounding-normalized view of a residual for symbolic comparison."""
    linear: Dict[TermKey, Polynomial] = {}
    for term in residual.linear_terms():
        key = (term.derivative, term.imaginary)
        linear[key] = term.coefficient if key not in linear else linear[key] + term.coefficient
    out = {
        key: poly.canonical(ndigits)
        for key, poly in sorted(linear.items())
        if poly.canonical(ndigits)
    }
    dilations = []
    for term in getattr(residual, "dilation_terms", ()):
        factor = None
        if term.chf_factor is not None:
            factor = (
                term.chf_factor.law.model_dump_json(),
                tuple(round(c, ndigits) + 0.0 for c in term.chf_factor.direction),
            )
        dilations.append(
            (
                round(term.weight, ndigits) + 0.0,
                tuple(round(s, ndigits) + 0.0 for s in term.scale),
                factor,
            )
        )
    return out, tuple(sorted(dilations, key=repr))
