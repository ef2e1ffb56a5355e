from app.net.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from app.net.jets import Jet, jet_eval, validate_multi_index
from app.net.mlp import (
    DTYPE,
    MlpArchitecture,
    MlpParams,
    configure_torch,
    forward,
    init_params,
    loss_gradient,
)
from app.net.network import Network

__all__ = [
    "DTYPE",
    "Checkpoint",
    "Jet",
    "MlpArchitecture",
    "MlpParams",
    "Network",
    "configure_torch",
    "forward",
    "init_params",
    "jet_eval",
    "load_checkpoint",
    "loss_gradient",
    "save_checkpoint",
    "validate_multi_index",
]
