from typing import Sequence, Union

import numpy as np
from scipy.stats import qmc

from app.exceptions import ConfigurationError
from app.fields import mesh_of
from app.train.domain import DomainBox

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence]


def _generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def lhs_in(lower, upper, n: int, seed: SeedLike) -> np.ndarray:
    """Latin hypercube sample of n points in the box [lower, upper]."""
    if n < 1:
        raise ConfigurationError(f"latin hypercube needs n >= 1, got {n}")
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    sampler = qmc.LatinHypercube(d=lower.size, seed=_generator(seed))
    return qmc.scale(sampler.random(n), lower, upper)


def sample_lhs(box: DomainBox, n: int, seed: SeedLike, include_time: bool = True) -> np.ndarray:
    lower, upper = box.bounds(include_time)
    return lhs_in(lower, upper, n, seed)


def grid_axes(box: DomainBox, counts: Sequence[int], include_time: bool = True):
    lower, upper = box.bounds(include_time)
    if len(counts) != lower.size:
        raise ConfigurationError(
            f"grid needs {lower.size} counts (one per coordinate), got {len(counts)}"
        )
    if any(c < 1 for c in counts):
        raise ConfigurationError(f"grid counts must be >= 1, got {list(counts)}")
    return [
        np.linspace(lo, hi, int(c)) if c > 1 else np.array([lo])
        for lo, hi, c in zip(lower, upper, counts)
    ]


def sample_grid(box: DomainBox, counts: Sequence[int], include_time: bool = True) -> np.ndarray:
    """Tensor grid with endpoints, row-major over the coordinates."""
    return mesh_of(grid_axes(box, counts, include_time))
