import math
from typing import Dict, Iterable, Optional, Sequence, Tuple

import sympy
from pydantic import BaseModel, ConfigDict, Field, model_validator

Exponents = Tuple[int, ...]


class PolyTerm(BaseModel):
    """One monomial coef * prod x_k^exp_k, as written in experiment configs."""

    model_config = ConfigDict(frozen=True)

    exp: Tuple[int, ...]
    coef: float


def _symbols(dim: int, prefix: str) -> Tuple[sympy.Symbol, ...]:
    return tuple(sympy.Symbol(f"{prefix}{k + 1}") for k in range(dim))


def _merge(dim: int, pairs: Iterable[Tuple[Sequence[int], float]]) -> Tuple[PolyTerm, ...]:
    merged: Dict[Exponents, float] = {}
    for exps, coef in pairs:
        exps = tuple(int(e) for e in exps)
        merged[exps] = merged.get(exps, 0.0) + float(coef)
    return tuple(
        PolyTerm(exp=exps, coef=coef)
        for exps, coef in sorted(merged.items())
        if coef != 0.0
    )


class Polynomial(BaseModel):
    """Real polynomial in `dim` variables, stored as merged, sorted monomials."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    terms: Tuple[PolyTerm, ...] = ()

    @model_validator(mode="after")
    def _normalize(self) -> "Polynomial":
        for term in self.terms:
            if len(term.exp) != self.dim:
                raise ValueError(
                    f"exponent {list(term.exp)} has length {len(term.exp)}, expected {self.dim}"
                )
            if any(e < 0 for e in term.exp):
                raise ValueError(f"exponent {list(term.exp)} has negative entries")
            if not math.isfinite(term.coef):
                raise ValueError(f"coefficient {term.coef} is not finite")
        normalized = _merge(self.dim, ((t.exp, t.coef) for t in self.terms))
        if normalized != self.terms:
            object.__setattr__(self, "terms", normalized)
        return self

    # construction

    @classmethod
    def zero(cls, dim: int) -> "Polynomial":
        return cls(dim=dim)

    @classmethod
    def constant(cls, dim: int, value: float) -> "Polynomial":
        return cls.from_dict(dim, {(0,) * dim: value})

    @classmethod
    def monomial(cls, dim: int, exps: Sequence[int], coef: float = 1.0) -> "Polynomial":
        return cls.from_dict(dim, {tuple(exps): coef})

    @classmethod
    def variable(cls, dim: int, k: int, coef: float = 1.0) -> "Polynomial":
        exps = [0] * dim
        exps[k] = 1
        return cls.monomial(dim, exps, coef)

    @classmethod
    def from_dict(cls, dim: int, coefs: Dict[Sequence[int], float]) -> "Polynomial":
        return cls(dim=dim, terms=_merge(dim, coefs.items()))

    @classmethod
    def from_terms(cls, dim: int, terms: Iterable) -> "Polynomial":
        """Accepts PolyTerm objects or {exp, coef} mappings."""
        parsed = [t if isinstance(t, PolyTerm) else PolyTerm.model_validate(t) for t in terms]
        return cls(dim=dim, terms=tuple(parsed))

    def as_dict(self) -> Dict[Exponents, float]:
        return {t.exp: t.coef for t in self.terms}

    # sympy bridge

    def to_sympy(self, prefix: str = "x") -> sympy.Poly:
        rep = {t.exp: t.coef for t in self.terms} or {(0,) * self.dim: 0.0}
        return sympy.Poly.from_dict(rep, *_symbols(self.dim, prefix), domain=sympy.RR)

    @classmethod
    def from_sympy(cls, poly: sympy.Poly) -> "Polynomial":
        pairs = [(monom, float(coef)) for monom, coef in poly.terms() if coef != 0]
        return cls(dim=len(poly.gens), terms=_merge(len(poly.gens), pairs))

    def to_expr(self, prefix: str = "x") -> sympy.Expr:
        symbols = _symbols(self.dim, prefix)
        expr = sympy.Integer(0)
        for term in self.terms:
            coef = term.coef
            scalar = sympy.Integer(int(coef)) if coef.is_integer() else sympy.Float(coef, 12)
            expr += scalar * sympy.Mul(*(s**e for s, e in zip(symbols, term.exp)))
        return expr

    def pretty(self, prefix: str = "x") -> str:
        return sympy.sstr(self.to_expr(prefix))

    # algebra

    def _check_dim(self, other: "Polynomial") -> None:
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.dim, float(other))
        self._check_dim(other)
        return Polynomial.from_sympy(self.to_sympy() + other.to_sympy())

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return self.scale(-1.0)

    def __sub__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.dim, float(other))
        return self + (-other)

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            return self.scale(float(other))
        self._check_dim(other)
        return Polynomial.from_sympy(self.to_sympy() * other.to_sympy())

    __rmul__ = __mul__

    def scale(self, factor: float) -> "Polynomial":
        return Polynomial(
            dim=self.dim,
            terms=tuple(PolyTerm(exp=t.exp, coef=t.coef * factor) for t in self.terms),
        )

    def diff(self, k: int) -> "Polynomial":
        poly = self.to_sympy()
        return Polynomial.from_sympy(poly.diff(poly.gens[k]))

    # inspection

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return all(not any(t.exp) for t in self.terms)

    @property
    def constant_term(self) -> float:
        return self.as_dict().get((0,) * self.dim, 0.0)

    @property
    def degree(self) -> int:
        return max((sum(t.exp) for t in self.terms), default=0)

    def single_term(self) -> Optional[PolyTerm]:
        return self.terms[0] if len(self.terms) == 1 else None

    def canonical(self, ndigits: int = 10) -> Tuple[Tuple[Exponents, float], ...]:
        out = []
        for term in self.terms:
            coef = round(term.coef, ndigits)
            if coef != 0.0:
                out.append((term.exp, coef + 0.0))
        return tuple(out)

    def evaluate(self, x):
        """Evaluate at points x of shape (..., dim); numpy arrays or torch tensors."""
        if x.shape[-1] != self.dim:
            raise ValueError(f"points have {x.shape[-1]} coordinates, expected {self.dim}")
        total = x[..., 0] * 0.0
        for term in self.terms:
            value = term.coef
            for k, e in enumerate(term.exp):
                if e:
                    value = value * x[..., k] ** e
            total = total + value
        return total

    def __call__(self, x):
        return self.evaluate(x)

    def __str__(self) -> str:
        return self.pretty()
