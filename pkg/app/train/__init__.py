from app.train.collocation import CollocationConfig, CollocationSet, build_collocation
from app.train.domain import DomainBox
from app.train.loop import TrainConfig, TrainResult, train
from app.train.losses import LossResult, chf_loss, fp_loss
from app.train.quadrature import NormalizerCache, TimeSliceQuadrature, norm_ratio_update
from app.train.sampling import grid_axes, lhs_in, sample_grid, sample_lhs

__all__ = [
    "CollocationConfig",
    "CollocationSet",
    "DomainBox",
    "LossResult",
    "NormalizerCache",
    "TimeSliceQuadrature",
    "TrainConfig",
    "TrainResult",
    "build_collocation",
    "chf_loss",
    "fp_loss",
    "grid_axes",
    "lhs_in",
    "norm_ratio_update",
    "sample_grid",
    "sample_lhs",
    "train",
]
