from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class DomainBox(BaseModel):
    """Truncated spatial (or frequency) box D and time horizon T."""

    model_config = ConfigDict(frozen=True)

    lower: Tuple[float, ...] = Field(min_length=1)
    upper: Tuple[float, ...] = Field(min_length=1)
    horizon: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "DomainBox":
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        for k, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not lo < hi:
                raise ValueError(f"coordinate {k}: lower {lo} must be below upper {hi}")
        return self

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def bounds(self, include_time: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if include_time:
            lower = np.append(lower, 0.0)
            upper = np.append(upper, self.horizon)
        return lower, upper

    def contains(self, points, include_time: bool = True, atol: float = 1e-12) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lower, upper = self.bounds(include_time)
        return np.all((points >= lower - atol) & (points <= upper + atol), axis=1)
