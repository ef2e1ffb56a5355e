from typing import Callable, Iterable

import numpy as np
import torch

from app.net.jets import Jet
from app.net.mlp import DTYPE


def autograd_derivative(fn: Callable, points, index, output: int = 0) -> torch.Tensor:
    """d^index fn[:, output] by nested reverse-mode passes; rows must be independent."""
    x = torch.as_tensor(points, dtype=DTYPE).detach().clone().requires_grad_(True)
    y = fn(x)[:, output]
    for k, e in enumerate(index):
        for _ in range(e):
            (g,) = torch.autograd.grad(y.sum(), x, create_graph=True)
            y = g[:, k]
    return y.detach()


class AutogradField:
    """Closed-form field exposing the values/jet interface of a network."""

    def __init__(self, fn: Callable[[torch.Tensor], torch.Tensor], output_dim: int = 1):
        self.fn = fn
        self.output_dim = output_dim

    def values(self, points) -> torch.Tensor:
        return self.fn(torch.as_tensor(points, dtype=DTYPE))

    def jet(self, points, request: Iterable[Iterable[int]]) -> Jet:
        x = torch.as_tensor(points, dtype=DTYPE)
        derivatives = {}
        for index in request:
            index = tuple(index)
            if not any(index):
                continue
            derivatives[index] = torch.stack(
                [autograd_derivative(self.fn, x, index, o) for o in range(self.output_dim)], dim=1
            )
        return Jet(base=x, value=self.values(x).detach(), derivatives=derivatives)


def brownian_chf_field(sigma: float = 1.0, nu: float = 1.0) -> AutogradField:
    def fn(p):
        u, t = p[:, 0], p[:, 1]
        return torch.exp(-0.5 * (nu + sigma**2 * t) * u**2).unsqueeze(1)

    return AutogradField(fn)


def brownian_log_density_field(sigma: float = 1.0, nu: float = 1.0) -> AutogradField:
    """v = x^2 / (2 s(t)), the unnormalized negative log of N(0, s(t))."""

    def fn(p):
        x, t = p[:, 0], p[:, 1]
        return (0.5 * x**2 / (nu + sigma**2 * t)).unsqueeze(1)

    return AutogradField(fn)


def grid_points(*axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def bundled(name: str, paper_scale: bool = False):
    from app.config import PROJECT_ROOT
    from app.experiment import load_experiment

    return load_experiment(PROJECT_ROOT / "configs" / f"{name}.toml", paper_scale=paper_scale)
