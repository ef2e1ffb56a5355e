from typing import Sequence

import numpy as np
import torch
from scipy.special import logsumexp

from app.fields import FieldEstimate, Provenance, Quantity, mesh_of
from app.net.mlp import DTYPE
from app.net.network import Network
from app.residual.chf import as_complex
from app.train.quadrature import TimeSliceQuadrature


def _with_time(nodes: np.ndarray, t: float) -> torch.Tensor:
    stacked = np.hstack([nodes, np.full((nodes.shape[0], 1), float(t))])
    return torch.as_tensor(stacked, dtype=DTYPE)


def _evaluate(network: Network, nodes: np.ndarray, t: float) -> torch.Tensor:
    with torch.no_grad():
        return network.detached().values(_with_time(nodes, t))


def chf_field(network: Network, axes: Sequence[np.ndarray], t: float, label: str = "") -> FieldEstimate:
    out = _evaluate(network, mesh_of(axes), t)
    values = as_complex(out).numpy().reshape(tuple(len(a) for a in axes))
    return FieldEstimate(
        axes=tuple(axes),
        values=values,
        time=t,
        provenance=Provenance.NETWORK,
        quantity=Quantity.CHF,
        label=label,
    )


def chf_line(
    network: Network, axis: int, line: np.ndarray, t: float, label: str = ""
) -> FieldEstimate:
    """phi along one frequency axis with every other frequency held at 0."""
    line = np.asarray(line, dtype=float)
    nodes = np.zeros((line.size, network.input_dim - 1))
    nodes[:, axis] = line
    values = as_complex(_evaluate(network, nodes, t)).numpy()
    return FieldEstimate(
        axes=(line,),
        values=values,
        time=t,
        provenance=Provenance.NETWORK,
        quantity=Quantity.CHF,
        label=label,
    )


def log_density_field(
    network: Network, axes: Sequence[np.ndarray], t: float, label: str = ""
) -> FieldEstimate:
    out = _evaluate(network, mesh_of(axes), t)[:, 0].numpy()
    return FieldEstimate(
        axes=tuple(axes),
        values=out.reshape(tuple(len(a) for a in axes)),
        time=t,
        provenance=Provenance.NETWORK,
        quantity=Quantity.LOG_DENSITY,
        label=label,
    )


class NetworkDensity:
    """f(x, t) = e^{-v(x,t)} / c(t) with c(t) from a fixed spatial quadrature.

    Differentiable in x for the boundary audit; c(t) is treated as a constant.
    """

    def __init__(self, network: Network, quad: TimeSliceQuadrature):
        self.network = network.detached()
        self.quad = quad

    def log_normalizer(self, t: float) -> float:
        v = _evaluate(self.network, self.quad.nodes, t)[:, 0].numpy()
        return float(logsumexp(-v, b=self.quad.weights))

    def __call__(self, points: torch.Tensor) -> torch.Tensor:
        times = points[:, -1].detach().numpy()
        unique, inverse = np.unique(times, return_inverse=True)
        log_c = torch.as_tensor([self.log_normalizer(t) for t in unique], dtype=DTYPE)
        v = self.network.values(points)[:, 0]
        return torch.exp(-v - log_c[torch.as_tensor(inverse.reshape(-1))])
