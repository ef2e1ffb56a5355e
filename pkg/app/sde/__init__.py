from app.sde.distributions import (
    DiscreteJump,
    GammaInitial,
    GaussianInitial,
    GaussianJump,
    InitialDist,
    JumpDist,
    JumpProcess,
    UniformInitial,
    UniformJump,
)
from app.sde.estimators import Histogram, empirical_chf, histogram, kde, silverman_bandwidth
from app.sde.export import (
    read_ensemble,
    read_ensemble_csv,
    read_ensemble_npz,
    write_ensemble_csv,
    write_ensemble_npz,
)
from app.sde.model import SdeModel
from app.sde.polynomial import Polynomial, PolyTerm
from app.sde.simulate import PathEnsemble, Scheme, simulate

__all__ = [
    "DiscreteJump",
    "GammaInitial",
    "GaussianInitial",
    "GaussianJump",
    "Histogram",
    "InitialDist",
    "JumpDist",
    "JumpProcess",
    "PathEnsemble",
    "PolyTerm",
    "Polynomial",
    "Scheme",
    "SdeModel",
    "UniformInitial",
    "UniformJump",
    "empirical_chf",
    "histogram",
    "kde",
    "read_ensemble",
    "read_ensemble_csv",
    "read_ensemble_npz",
    "silverman_bandwidth",
    "simulate",
    "write_ensemble_csv",
    "write_ensemble_npz",
]
