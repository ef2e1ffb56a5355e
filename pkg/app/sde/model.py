from typing import Any, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.sde.distributions import JumpProcess
from app.sde.polynomial import Polynomial

PolyRow = Tuple[Polynomial, ...]


def _as_polynomial(dim: int, entry: Any) -> Any:
    if isinstance(entry, (Polynomial, dict)):
        return entry
    return Polynomial.from_terms(dim, entry or [])


def _as_matrix(dim: int, rows: Any) -> Any:
    if rows is None:
        return tuple(() for _ in range(dim))
    rows = list(rows)
    if not rows:
        return tuple(() for _ in range(dim))
    return tuple(tuple(_as_polynomial(dim, e) for e in row) for row in rows)


class SdeModel(BaseModel):
    """dX = a(X) dt + b(X) dB + c(X-) dC with polynomial coefficients.

    Matrices are stored row-major: gwn_diffusion[k][r] is b_kr and
    jump_diffusion[k][r] is c_kr, the coefficient of the r-th compound
    Poisson channel in component k. Configs may give coefficients as lists
    of {exp, coef} terms and may attach each jump column to its channel
    under `coefficients`.
    """

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    drift: PolyRow
    gwn_diffusion: Tuple[PolyRow, ...] = ()
    jump_diffusion: Tuple[PolyRow, ...] = ()
    jumps: Tuple[JumpProcess, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if not isinstance(data, dict) or "dim" not in data:
            return data
        data = dict(data)
        dim = int(data["dim"])
        if "drift" in data:
            data["drift"] = tuple(_as_polynomial(dim, e) for e in data["drift"])
        data["gwn_diffusion"] = _as_matrix(dim, data.get("gwn_diffusion"))

        jumps = list(data.get("jumps") or [])
        columns = []
        for j, jump in enumerate(jumps):
            if isinstance(jump, dict) and "coefficients" in jump:
                jump = dict(jump)
                column = jump.pop("coefficients")
                if len(column) != dim:
                    raise ValueError(
                        f"jumps[{j}].coefficients has {len(column)} entries, expected {dim}"
                    )
                columns.append([_as_polynomial(dim, e) for e in column])
                jumps[j] = jump
        if columns:
            if len(columns) != len(jumps):
                raise ValueError("either every jump channel lists coefficients or none does")
            data["jump_diffusion"] = tuple(
                tuple(columns[r][k] for r in range(len(columns))) for k in range(dim)
            )
        else:
            data["jump_diffusion"] = _as_matrix(dim, data.get("jump_diffusion"))
        data["jumps"] = tuple(jumps)
        return data

    @model_validator(mode="after")
    def _shapes(self) -> "SdeModel":
        d = self.dim
        if len(self.drift) != d:
            raise ValueError(f"drift has {len(self.drift)} entries, expected {d}")
        for name, matrix, width in (
            ("gwn_diffusion", self.gwn_diffusion, None),
            ("jump_diffusion", self.jump_diffusion, len(self.jumps)),
        ):
            if len(matrix) != d:
                raise ValueError(f"{name} has {len(matrix)} rows, expected {d}")
            widths = {len(row) for row in matrix}
            if len(widths) > 1:
                raise ValueError(f"{name} rows have differing lengths {sorted(widths)}")
            if width is not None and widths and widths.pop() != width:
                raise ValueError(f"{name} needs one column per jump channel ({width})")
        for k, poly in enumerate(self.drift):
            if poly.dim != d:
                raise ValueError(f"drift[{k}] is a polynomial in {poly.dim} variables")
        for name, matrix in (("gwn_diffusion", self.gwn_diffusion), ("jump_diffusion", self.jump_diffusion)):
            for k, row in enumerate(matrix):
                for r, poly in enumerate(row):
                    if poly.dim != d:
                        raise ValueError(f"{name}[{k}][{r}] is a polynomial in {poly.dim} variables")
        return self

    @property
    def m_b(self) -> int:
        return len(self.gwn_diffusion[0]) if self.gwn_diffusion else 0

    @property
    def m_c(self) -> int:
        return len(self.jumps)

    def jump_column(self, r: int) -> PolyRow:
        return tuple(row[r] for row in self.jump_diffusion)

    def diffusion_matrix(self) -> List[List[Polynomial]]:
        """B = b b' as a d x d matrix of polynomials."""
        d = self.dim
        out = [[Polynomial.zero(d) for _ in range(d)] for _ in range(d)]
        for k in range(d):
            for l in range(k, d):
                entry = Polynomial.zero(d)
                for r in range(self.m_b):
                    bk, bl = self.gwn_diffusion[k][r], self.gwn_diffusion[l][r]
                    if not (bk.is_zero or bl.is_zero):
                        entry = entry + bk * bl
                out[k][l] = out[l][k] = entry
        return out

    # numeric evaluation at (n, d) arrays

    def drift_at(self, x: np.ndarray) -> np.ndarray:
        return np.stack([p.evaluate(x) for p in self.drift], axis=-1)

    def gwn_at(self, x: np.ndarray) -> np.ndarray:
        return _matrix_at(self.gwn_diffusion, x, self.m_b)

    def jump_at(self, x: np.ndarray) -> np.ndarray:
        return _matrix_at(self.jump_diffusion, x, self.m_c)


def _matrix_at(matrix: Tuple[PolyRow, ...], x: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros(x.shape[:-1] + (len(matrix), width))
    for k, row in enumerate(matrix):
        for r, poly in enumerate(row):
            if not poly.is_zero:
                out[..., k, r] = poly.evaluate(x)
    return out
