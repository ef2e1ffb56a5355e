"""Jump-size laws of the compound Poisson channels and initial-state laws."""

import math
from typing import Annotated, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special, stats

JUMP_MEAN_TOL = 1e-12
GAUSSIAN_SUPPORT_SIGMAS = 6.0


class DiscreteJump(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["discrete"] = "discrete"
    values: Tuple[float, ...] = Field(min_length=1)
    probs: Optional[Tuple[float, ...]] = None

    @model_validator(mode="after")
    def _check_probs(self) -> "DiscreteJump":
        if self.probs is None:
            n = len(self.values)
            object.__setattr__(self, "probs", tuple(1.0 / n for _ in range(n)))
        if len(self.probs) != len(self.values):
            raise ValueError("probs and values must have the same length")
        if any(p < 0 for p in self.probs):
            raise ValueError("probs must be non-negative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError(f"probs sum to {sum(self.probs)}, expected 1")
        return self

    def chf(self, s):
        s = np.asarray(s, dtype=float)
        z = np.asarray(self.values)
        p = np.asarray(self.probs)
        return np.exp(1j * s[..., None] * z) @ p

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(np.asarray(self.values), size=n, p=np.asarray(self.probs))

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    @property
    def second_moment(self) -> float:
        return float(np.dot(np.square(self.values), self.probs))

    @property
    def support(self) -> Tuple[float, float]:
        return min(self.values), max(self.values)

    @property
    def symmetric(self) -> bool:
        law = {}
        for z, p in zip(self.values, self.probs):
            law[z] = law.get(z, 0.0) + p
        return all(abs(law.get(-z, 0.0) - p) <= 1e-12 for z, p in law.items())

    def quadrature(self, order: int = 16) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.values, dtype=float), np.asarray(self.probs, dtype=float)


class GaussianJump(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian"] = "gaussian"
    mean: float = 0.0
    variance: float = Field(gt=0)

    def chf(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(1j * self.mean * s - 0.5 * self.variance * s**2)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(self.mean, math.sqrt(self.variance), size=n)

    def pdf(self, z):
        return stats.norm.pdf(z, loc=self.mean, scale=math.sqrt(self.variance))

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean**2

    @property
    def support(self) -> Tuple[float, float]:
        half = GAUSSIAN_SUPPORT_SIGMAS * math.sqrt(self.variance)
        return self.mean - half, self.mean + half

    @property
    def symmetric(self) -> bool:
        return self.mean == 0.0

    def quadrature(self, order: int = 16) -> Tuple[np.ndarray, np.ndarray]:
        return _legendre_rule(self, order)


class UniformJump(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform"] = "uniform"
    lo: float
    hi: float

    @model_validator(mode="after")
    def _ordered(self) -> "UniformJump":
        if not self.lo < self.hi:
            raise ValueError(f"uniform jump law needs lo < hi, got [{self.lo}, {self.hi}]")
        return self

    def chf(self, s):
        s = np.asarray(s, dtype=float)
        mid = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        return np.exp(1j * mid * s) * np.sinc(s * half / np.pi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.where((z >= self.lo) & (z <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def second_moment(self) -> float:
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0

    @property
    def support(self) -> Tuple[float, float]:
        return self.lo, self.hi

    @property
    def symmetric(self) -> bool:
        return self.lo == -self.hi

    def quadrature(self, order: int = 16) -> Tuple[np.ndarray, np.ndarray]:
        return _legendre_rule(self, order)


def _legendre_rule(law, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on the law's support, weights renormalized to sum 1."""
    nodes, weights = special.roots_legendre(order)
    lo, hi = law.support
    z = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * weights * law.pdf(z)
    return z, w / w.sum()


JumpDist = Annotated[
    Union[DiscreteJump, GaussianJump, UniformJump], Field(discriminator="kind")
]


class JumpProcess(BaseModel):
    """Compound Poisson channel: event rate and jump-size law (mean zero)."""

    model_config = ConfigDict(frozen=True)

    intensity: float = Field(gt=0, allow_inf_nan=False)
    law: JumpDist

    @model_validator(mode="after")
    def _zero_mean(self) -> "JumpProcess":
        scale = max(1.0, math.sqrt(self.law.second_moment))
        if abs(self.law.mean) > JUMP_MEAN_TOL * scale:
            raise ValueError(f"jump sizes must have mean zero, got {self.law.mean}")
        return self


class GaussianInitial(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian"] = "gaussian"
    mean: Tuple[float, ...] = Field(min_length=1)
    cov: Tuple[Tuple[float, ...], ...]

    @model_validator(mode="after")
    def _spd(self) -> "GaussianInitial":
        d = len(self.mean)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (d, d):
            raise ValueError(f"cov must be {d}x{d}, got {list(cov.shape)}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("cov must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ValueError("cov must be positive definite") from e
        return self

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def symmetric(self) -> bool:
        return not any(self.mean)

    def _law(self):
        return stats.multivariate_normal(mean=np.asarray(self.mean), cov=np.asarray(self.cov))

    def pdf(self, x) -> np.ndarray:
        return np.atleast_1d(self._law().pdf(np.asarray(x, dtype=float)))

    def logpdf(self, x) -> np.ndarray:
        return np.atleast_1d(self._law().logpdf(np.asarray(x, dtype=float)))

    def neg_logpdf(self, x) -> np.ndarray:
        return -self.logpdf(x)

    def chf(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        mean = np.asarray(self.mean)
        cov = np.asarray(self.cov)
        quad = np.einsum("ni,ij,nj->n", u, cov, u)
        return np.exp(1j * (u @ mean) - 0.5 * quad)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        chol = np.linalg.cholesky(np.asarray(self.cov, dtype=float))
        z = rng.standard_normal((n, self.dim))
        return np.asarray(self.mean) + z @ chol.T


class UniformInitial(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform"] = "uniform"
    lo: Tuple[float, ...] = Field(min_length=1)
    hi: Tuple[float, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _box(self) -> "UniformInitial":
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")
        if any(not a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("uniform initial law needs lo < hi per coordinate")
        return self

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def symmetric(self) -> bool:
        return all(a == -b for a, b in zip(self.lo, self.hi))

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        return np.where(inside, 1.0 / np.prod(hi - lo), 0.0)

    def logpdf(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def neg_logpdf(self, x) -> np.ndarray:
        return -self.logpdf(x)

    def chf(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.ones(u.shape[0], dtype=complex)
        for k, (a, b) in enumerate(zip(self.lo, self.hi)):
            out = out * UniformJump(lo=a, hi=b).chf(u[:, k])
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(np.asarray(self.lo), np.asarray(self.hi), size=(n, self.dim))


class GammaInitial(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["gamma"] = "gamma"
    shape: float = Field(gt=0)
    scale: float = Field(gt=0)

    @property
    def dim(self) -> int:
        return 1

    @property
    def symmetric(self) -> bool:
        return False

    def _law(self):
        return stats.gamma(a=self.shape, scale=self.scale)

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._law().pdf(x[:, 0])

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._law().logpdf(x[:, 0])

    def neg_logpdf(self, x) -> np.ndarray:
        return -self.logpdf(x)

    def chf(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return (1.0 - 1j * self.scale * u[:, 0]) ** (-self.shape)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size=(n, 1))


InitialDist = Annotated[
    Union[GaussianInitial, UniformInitial, GammaInitial], Field(discriminator="kind")
]
