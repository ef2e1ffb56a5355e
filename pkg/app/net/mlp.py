import logging
import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.exceptions import ConfigurationError, TrainingDiagnosticError

logger = logging.getLogger(__name__)

DTYPE = torch.float64


class MlpArchitecture(BaseModel):
    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(ge=1)
    hidden_widths: Tuple[int, ...] = ()
    output_dim: Literal[1, 2] = 1
    activation: Literal["tanh"] = "tanh"

    @field_validator("hidden_widths")
    @classmethod
    def _positive_widths(cls, widths: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(w < 1 for w in widths):
            raise ValueError("hidden widths must be >= 1")
        return widths

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def weight_shapes(self) -> List[Tuple[int, int]]:
        sizes = self.layer_sizes
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    @property
    def parameter_count(self) -> int:
        return sum(rows * cols + rows for rows, cols in self.weight_shapes)


@dataclass(frozen=True)
class MlpParams:
    """Weights W^l (out x in) and biases b^l of every layer, float64."""

    weights: Tuple[torch.Tensor, ...]
    biases: Tuple[torch.Tensor, ...]

    def tensors(self) -> List[torch.Tensor]:
        out: List[torch.Tensor] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_tensors(cls, tensors: Sequence[torch.Tensor]) -> "MlpParams":
        tensors = list(tensors)
        return cls(weights=tuple(tensors[0::2]), biases=tuple(tensors[1::2]))

    def check(self, arch: MlpArchitecture, require_finite: bool = True) -> None:
        shapes = arch.weight_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ConfigurationError(
                f"expected {len(shapes)} layers, got {len(self.weights)} weights "
                f"and {len(self.biases)} biases"
            )
        for layer, ((rows, cols), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if tuple(w.shape) != (rows, cols):
                raise ConfigurationError(
                    f"layer {layer}: weight shape {tuple(w.shape)} != {(rows, cols)}"
                )
            if tuple(b.shape) != (rows,):
                raise ConfigurationError(
                    f"layer {layer}: bias shape {tuple(b.shape)} != {(rows,)}"
                )
            if require_finite and not (
                bool(torch.isfinite(w).all()) and bool(torch.isfinite(b).all())
            ):
                raise ConfigurationError(f"layer {layer}: non-finite parameters")

    def detached(self) -> "MlpParams":
        return MlpParams.from_tensors([t.detach().clone() for t in self.tensors()])

    def trainable(self) -> "MlpParams":
        return MlpParams.from_tensors(
            [t.detach().clone().requires_grad_(True) for t in self.tensors()]
        )

    def flatten(self) -> torch.Tensor:
        return torch.cat([t.reshape(-1) for t in self.tensors()])

    @classmethod
    def unflatten(cls, arch: MlpArchitecture, flat: torch.Tensor) -> "MlpParams":
        flat = torch.as_tensor(flat, dtype=DTYPE)
        if flat.numel() != arch.parameter_count:
            raise ConfigurationError(
                f"flat vector has {flat.numel()} entries, architecture needs "
                f"{arch.parameter_count}"
            )
        tensors, offset = [], 0
        for rows, cols in arch.weight_shapes:
            tensors.append(flat[offset : offset + rows * cols].reshape(rows, cols))
            offset += rows * cols
            tensors.append(flat[offset : offset + rows])
            offset += rows
        return cls.from_tensors(tensors)


def as_batch(inputs, arch: MlpArchitecture) -> Tuple[torch.Tensor, bool]:
    """Coerce inputs to an (N, input_dim) float64 tensor; flags a single vector."""
    x = torch.as_tensor(inputs, dtype=DTYPE)
    single = x.dim() == 1
    if single:
        x = x.unsqueeze(0)
    if x.dim() != 2 or x.shape[-1] != arch.input_dim:
        raise ConfigurationError(
            f"input shape {tuple(x.shape)} does not match input_dim {arch.input_dim}"
        )
    return x, single


def forward(params: MlpParams, arch: MlpArchitecture, inputs) -> torch.Tensor:
    """Affine-tanh-...-affine composition; the output layer is linear."""
    params.check(arch, require_finite=False)
    x, single = as_batch(inputs, arch)
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = torch.tanh(h @ w.T + b)
    out = h @ params.weights[-1].T + params.biases[-1]
    return out[0] if single else out


def init_params(
    arch: MlpArchitecture,
    seed: int,
    output_bias: float = 0.0,
    requires_grad: bool = True,
) -> MlpParams:
    """Glorot-uniform weights, zero biases (output bias optionally offset)."""
    generator = torch.Generator().manual_seed(int(seed))
    tensors: List[torch.Tensor] = []
    for fan_out, fan_in in arch.weight_shapes:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = torch.empty(fan_out, fan_in, dtype=DTYPE)
        w.uniform_(-limit, limit, generator=generator)
        tensors.extend((w, torch.zeros(fan_out, dtype=DTYPE)))
    tensors[-1].fill_(float(output_bias))
    if requires_grad:
        tensors = [t.requires_grad_(True) for t in tensors]
    return MlpParams.from_tensors(tensors)


def configure_torch(threads: int) -> None:
    """Single-threaded mode is the bitwise-reproducible one."""
    threads = max(1, int(threads))
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(threads == 1, warn_only=True)
    logger.debug("torch threads=%d deterministic=%s", threads, threads == 1)


def locate_offending_point(
    pointwise: Optional[torch.Tensor], points: Optional[torch.Tensor]
) -> Optional[List[float]]:
    """First non-finite residual's point, else the point of largest magnitude."""
    if pointwise is None or points is None or pointwise.numel() == 0:
        return None
    magnitude = pointwise.detach().abs().reshape(-1)
    bad = ~torch.isfinite(magnitude)
    if bool(bad.any()):
        index = int(torch.nonzero(bad)[0, 0])
    else:
        index = int(torch.argmax(magnitude))
    return [float(v) for v in points[index].detach().reshape(-1)]


def loss_gradient(
    params: MlpParams,
    loss: torch.Tensor,
    *,
    pointwise: Optional[torch.Tensor] = None,
    points: Optional[torch.Tensor] = None,
) -> MlpParams:
    """Reverse-mode gradient of a scalar loss w.r.t. every weight and bias."""
    if not bool(torch.isfinite(loss.detach()).all()):
        point = locate_offending_point(pointwise, points)
        raise TrainingDiagnosticError(
            "loss is not finite", point=point, details={"loss": str(float(loss.detach()))}
        )
    tensors = params.tensors()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    return MlpParams.from_tensors(
        [torch.zeros_like(t) if g is None else g for t, g in zip(tensors, grads)]
    )
