import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from app.exceptions import ConfigurationError, NormalizationError
from app.fields import mesh_of, tensor_weights
from app.net.mlp import DTYPE
from app.residual.terms import time_index
from app.train.domain import DomainBox
from app.train.sampling import grid_axes

logger = logging.getLogger(__name__)

V_CLAMP = 30.0
MAX_CLAMPED_FRACTION = 0.01


@dataclass(frozen=True)
class TimeSliceQuadrature:
    """Spatial nodes and weights used for the normalizer c(t) = int e^{-v(x,t)} dx."""

    nodes: np.ndarray  # (M, d)
    weights: np.ndarray  # (M,)
    kind: str

    @classmethod
    def trapezoid(cls, box: DomainBox, counts: Sequence[int]) -> "TimeSliceQuadrature":
        axes = grid_axes(box, counts, include_time=False)
        return cls(nodes=mesh_of(axes), weights=tensor_weights(axes), kind="trapezoid")

    @classmethod
    def monte_carlo(cls, box: DomainBox, nodes: np.ndarray) -> "TimeSliceQuadrature":
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        if nodes.shape[1] != box.dim:
            raise ConfigurationError(f"quadrature nodes have {nodes.shape[1]} coordinates")
        weights = np.full(nodes.shape[0], box.volume / nodes.shape[0])
        return cls(nodes=nodes, weights=weights, kind="monte_carlo")

    @property
    def size(self) -> int:
        return self.nodes.shape[0]


@dataclass(frozen=True)
class NormalizerCache:
    times: torch.Tensor
    c: torch.Tensor
    ratio: torch.Tensor
    clamped_low: int
    clamped_high: int
    total: int

    def ratio_at(self, t: torch.Tensor) -> torch.Tensor:
        index = torch.searchsorted(self.times, t.detach().contiguous())
        return self.ratio[index.clamp(max=self.times.numel() - 1)]


def norm_ratio_update(field, quad: TimeSliceQuadrature, times) -> NormalizerCache:
    """c(t) and c'(t)/c(t) = -sum w e^{-v} v_t / c(t) at every distinct time.

    Stays on the autograd graph of the field's parameters.
    """
    times = torch.as_tensor(times, dtype=DTYPE).reshape(-1)
    unique = torch.unique(times.detach())
    d = quad.nodes.shape[1]
    nodes = torch.as_tensor(quad.nodes, dtype=DTYPE)
    weights = torch.as_tensor(quad.weights, dtype=DTYPE)
    n_t, n_x = unique.numel(), nodes.shape[0]
    points = torch.cat(
        [nodes.repeat(n_t, 1), unique.repeat_interleave(n_x).unsqueeze(1)], dim=1
    )
    t_index = time_index(d)
    jet = field.jet(points, [t_index])
    v = jet.value[:, 0].reshape(n_t, n_x)
    v_t = jet[t_index][:, 0].reshape(n_t, n_x)

    low = int((v.detach() < -V_CLAMP).sum())
    high = int((v.detach() > V_CLAMP).sum())
    total = v.numel()
    v_range = (float(v.detach().min()), float(v.detach().max()))
    if low > MAX_CLAMPED_FRACTION * total or not all(np.isfinite(v_range)):
        worst = int(torch.argmin(torch.nan_to_num(v.detach(), nan=-np.inf).reshape(-1)))
        raise NormalizationError(
            f"v fell below -{V_CLAMP:g} at {low} of {total} quadrature nodes",
            v_range=v_range,
            clamped=low + high,
            total=total,
            point=points[worst].tolist(),
        )
    if low or high:
        logger.debug("normalizer clamped %d low and %d high of %d nodes", low, high, total)

    mass = torch.exp(-v.clamp(-V_CLAMP, V_CLAMP)) * weights
    c = mass.sum(dim=1)
    ratio = -(mass * v_t).sum(dim=1) / c
    if not (bool(torch.isfinite(c).all()) and bool(torch.isfinite(ratio).all())):
        raise NormalizationError(
            "normalizer is not finite", v_range=v_range, clamped=low + high, total=total
        )
    return NormalizerCache(
        times=unique, c=c, ratio=ratio, clamped_low=low, clamped_high=high, total=total
    )
