import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Union

import torch
from pydantic import BaseModel, ValidationError

from app.exceptions import ConfigurationError
from app.net.mlp import DTYPE, MlpArchitecture, MlpParams

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pdfnet-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointFile(BaseModel):
    format: Literal["pdfnet-checkpoint"] = CHECKPOINT_FORMAT
    version: Literal[1] = CHECKPOINT_VERSION
    architecture: MlpArchitecture
    weights: List[List[List[float]]]
    biases: List[List[float]]
    metadata: Dict[str, Any] = {}


@dataclass(frozen=True)
class Checkpoint:
    arch: MlpArchitecture
    params: MlpParams
    metadata: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    path: Union[str, Path],
    arch: MlpArchitecture,
    params: MlpParams,
    metadata: Dict[str, Any] = None,
) -> Path:
    """Write a self-describing JSON checkpoint; floats round-trip exactly."""
    params.check(arch)
    document = CheckpointFile(
        architecture=arch,
        weights=[w.detach().tolist() for w in params.weights],
        biases=[b.detach().tolist() for b in params.biases],
        metadata=dict(metadata or {}),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # stdlib json writes repr floats, which parse back bit-for-bit
    path.write_text(json.dumps(document.model_dump(mode="python"), indent=1))
    logger.debug("checkpoint written to %s", path)
    return path


def load_checkpoint(path: Union[str, Path], requires_grad: bool = False) -> Checkpoint:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read checkpoint {path}: {e}") from e
    try:
        document = CheckpointFile.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid checkpoint {path}: {e}") from e

    tensors = []
    for w, b in zip(document.weights, document.biases):
        tensors.append(torch.tensor(w, dtype=DTYPE))
        tensors.append(torch.tensor(b, dtype=DTYPE))
    params = MlpParams.from_tensors(tensors)
    params.check(document.architecture)
    if requires_grad:
        params = params.trainable()
    return Checkpoint(document.architecture, params, document.metadata)
