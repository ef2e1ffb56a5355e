import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Literal, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.exceptions import ConfigurationError
from app.net.mlp import DTYPE
from app.train.domain import DomainBox
from app.train.sampling import lhs_in, sample_grid, sample_lhs

logger = logging.getLogger(__name__)

Route = Literal["fokker_planck", "chf"]


class CollocationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    op_sampler: Literal["grid", "lhs", "lhs_product"] = "lhs"
    op_counts: Optional[Tuple[int, ...]] = None
    n_op: Optional[int] = Field(None, ge=1)
    n_op_times: Optional[int] = Field(None, ge=1)
    n_op_space: Optional[int] = Field(None, ge=1)

    ic_sampler: Literal["grid", "grid_subset", "lhs", "uniform"] = "lhs"
    ic_counts: Optional[Tuple[int, ...]] = None
    n_ic: Optional[int] = Field(None, ge=1)

    origin_sampler: Literal["equispaced", "lhs"] = "equispaced"
    n_origin: int = Field(100, ge=0)

    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _required(self) -> "CollocationConfig":
        needs = {
            "grid": ("op_counts",),
            "lhs": ("n_op",),
            "lhs_product": ("n_op_times", "n_op_space"),
        }[self.op_sampler]
        needs += {
            "grid": ("ic_counts",),
            "grid_subset": ("ic_counts", "n_ic"),
            "lhs": ("n_ic",),
            "uniform": ("n_ic",),
        }[self.ic_sampler]
        missing = [name for name in needs if getattr(self, name) is None]
        if missing:
            raise ValueError(
                f"op_sampler={self.op_sampler!r}, ic_sampler={self.ic_sampler!r} need {missing}"
            )
        return self


@dataclass(frozen=True)
class CollocationSet:
    """Operator, initial-condition and origin points; rows are (coords..., t)."""

    op_points: np.ndarray
    ic_points: np.ndarray
    origin_points: np.ndarray
    space_nodes: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_op(self) -> int:
        return self.op_points.shape[0]

    def tensors(self) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return (
            torch.as_tensor(self.op_points, dtype=DTYPE),
            torch.as_tensor(self.ic_points, dtype=DTYPE),
            torch.as_tensor(self.origin_points, dtype=DTYPE),
        )

    def take_op(self, index: Optional[np.ndarray]) -> "CollocationSet":
        if index is None:
            return self
        return replace(self, op_points=self.op_points[np.asarray(index)])


def _at_time(space: np.ndarray, t: float) -> np.ndarray:
    return np.hstack([space, np.full((space.shape[0], 1), float(t))])


def build_collocation(config: CollocationConfig, box: DomainBox, route: Route) -> CollocationSet:
    op_seed, ic_seed, origin_seed = np.random.SeedSequence(config.seed).spawn(3)
    d = box.dim
    space_nodes = None

    if config.op_sampler == "grid":
        op = sample_grid(box, config.op_counts)
    elif config.op_sampler == "lhs":
        op = sample_lhs(box, config.n_op, op_seed)
    else:
        times_seed, space_seed = op_seed.spawn(2)
        times = lhs_in([0.0], [box.horizon], config.n_op_times, times_seed)[:, 0]
        space_nodes = sample_lhs(box, config.n_op_space, space_seed, include_time=False)
        op = np.vstack([_at_time(space_nodes, t) for t in np.sort(times)])

    if config.ic_sampler == "grid":
        ic_space = sample_grid(box, config.ic_counts, include_time=False)
    elif config.ic_sampler == "grid_subset":
        candidates = sample_grid(box, config.ic_counts, include_time=False)
        if config.n_ic > candidates.shape[0]:
            raise ConfigurationError(
                f"n_ic={config.n_ic} exceeds the {candidates.shape[0]} grid nodes"
            )
        rng = np.random.default_rng(ic_seed)
        chosen = np.sort(rng.choice(candidates.shape[0], size=config.n_ic, replace=False))
        ic_space = candidates[chosen]
    elif config.ic_sampler == "lhs":
        ic_space = sample_lhs(box, config.n_ic, ic_seed, include_time=False)
    else:
        lower, upper = box.bounds(include_time=False)
        ic_space = np.random.default_rng(ic_seed).uniform(lower, upper, size=(config.n_ic, d))
    ic = _at_time(ic_space, 0.0)

    if route == "chf" and config.n_origin > 0:
        if config.origin_sampler == "equispaced":
            times = np.linspace(0.0, box.horizon, config.n_origin)
        else:
            times = np.sort(lhs_in([0.0], [box.horizon], config.n_origin, origin_seed)[:, 0])
        origin = np.hstack([np.zeros((times.size, d)), times[:, None]])
    else:
        origin = np.zeros((0, d + 1))

    logger.info(
        "collocation: %d operator (%s), %d initial (%s), %d origin points",
        op.shape[0],
        config.op_sampler,
        ic.shape[0],
        config.ic_sampler,
        origin.shape[0],
    )
    return CollocationSet(
        op_points=op,
        ic_points=ic,
        origin_points=origin,
        space_nodes=space_nodes,
        metadata={"op": config.op_sampler, "ic": config.ic_sampler, "seed": config.seed},
    )

