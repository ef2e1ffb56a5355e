from dataclasses import dataclass
from typing import Iterable

import torch

from app.net.jets import Jet, jet_eval
from app.net.mlp import MlpArchitecture, MlpParams, forward


@dataclass(frozen=True)
class Network:
    """An architecture bound to a parameter set."""

    arch: MlpArchitecture
    params: MlpParams

    @property
    def input_dim(self) -> int:
        return self.arch.input_dim

    @property
    def output_dim(self) -> int:
        return self.arch.output_dim

    def values(self, points) -> torch.Tensor:
        return forward(self.params, self.arch, points)

    def jet(self, points, request: Iterable[Iterable[int]]) -> Jet:
        return jet_eval(self.params, self.arch, points, request)

    def detached(self) -> "Network":
        return Network(self.arch, self.params.detached())
