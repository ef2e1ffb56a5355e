"""Input-derivative jets by truncated bivariate Taylor propagation.

A group propagates the Taylor polynomial of the network along at most two
input directions e_a, e_b; coefficients are keyed by (p, q), the powers of
the two direction parameters, up to total degree 3. Affine layers act on
every coefficient (bias on the value only); tanh layers compose the series

    tanh(z0 + d) = t + t1 d + t2/2 d^2 + t3/6 d^3

with t1, t2, t3 computed from t = tanh(z0). The partial derivative
d^{p+q} f / da^p db^q equals p! q! times coefficient (p, q).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import torch

from app.exceptions import UnsupportedDerivativeError
from app.net.mlp import DTYPE, MlpArchitecture, MlpParams, as_batch

MultiIndex = Tuple[int, ...]
Key = Tuple[int, int]

MAX_ORDER = 3
MAX_ACTIVE = 2


@dataclass(frozen=True)
class Jet:
    base: torch.Tensor
    value: torch.Tensor
    derivatives: Dict[MultiIndex, torch.Tensor]

    def __getitem__(self, index: Iterable[int]) -> torch.Tensor:
        index = tuple(index)
        if not any(index):
            return self.value
        return self.derivatives[index]

    def __contains__(self, index: Iterable[int]) -> bool:
        index = tuple(index)
        return not any(index) or index in self.derivatives


def validate_multi_index(index: Iterable[int], input_dim: int) -> MultiIndex:
    index = tuple(int(e) for e in index)
    if len(index) != input_dim:
        raise UnsupportedDerivativeError(
            f"multi-index {index} has length {len(index)}, expected {input_dim}"
        )
    if any(e < 0 for e in index):
        raise UnsupportedDerivativeError(f"multi-index {index} has negative entries")
    if sum(index) > MAX_ORDER:
        raise UnsupportedDerivativeError(
            f"multi-index {index} has order {sum(index)} > {MAX_ORDER}"
        )
    if sum(1 for e in index if e) > MAX_ACTIVE:
        raise UnsupportedDerivativeError(
            f"multi-index {index} has more than {MAX_ACTIVE} active coordinates"
        )
    return index


@dataclass
class _Stream:
    groups: List
    order: int
    coefs: Dict[Key, torch.Tensor] = field(default_factory=dict)


def _truncated_product(
    left: Dict[Key, torch.Tensor], right: Dict[Key, torch.Tensor], order: int
) -> Dict[Key, torch.Tensor]:
    out: Dict[Key, torch.Tensor] = {}
    for (p1, q1), c1 in left.items():
        for (p2, q2), c2 in right.items():
            key = (p1 + p2, q1 + q2)
            if key[0] + key[1] > order:
                continue
            term = c1 * c2
            out[key] = out[key] + term if key in out else term
    return out


def _compose_tanh(
    t: torch.Tensor, coefs: Dict[Key, torch.Tensor], order: int
) -> Dict[Key, torch.Tensor]:
    t1 = 1.0 - t * t
    out = {key: t1 * c for key, c in coefs.items()}
    if order < 2:
        return out
    square = _truncated_product(coefs, coefs, order)
    half_t2 = -t * t1
    for key, c in square.items():
        out[key] = out[key] + half_t2 * c if key in out else half_t2 * c
    if order < 3:
        return out
    cube = _truncated_product(square, coefs, order)
    sixth_t3 = -t1 * (1.0 - 3.0 * t * t) / 3.0
    for key, c in cube.items():
        out[key] = out[key] + sixth_t3 * c if key in out else sixth_t3 * c
    return out


def _unit_rows(coords: List[int], input_dim: int) -> torch.Tensor:
    rows = torch.zeros(len(coords), 1, input_dim, dtype=DTYPE)
    for g, k in enumerate(coords):
        rows[g, 0, k] = 1.0
    return rows


def _plan(
    indices: Iterable[MultiIndex], input_dim: int
) -> Tuple[Optional[_Stream], Optional[_Stream]]:
    singles: Dict[int, int] = {}
    pairs: Dict[Tuple[int, int], int] = {}
    for index in indices:
        active = [k for k, e in enumerate(index) if e]
        order = sum(index)
        if len(active) == 1:
            singles[active[0]] = max(singles.get(active[0], 0), order)
        elif len(active) == 2:
            pair = (active[0], active[1])
            pairs[pair] = max(pairs.get(pair, 0), order)

    univariate = paired = None
    if singles:
        coords = sorted(singles)
        univariate = _Stream(groups=coords, order=max(singles.values()))
        univariate.coefs[(1, 0)] = _unit_rows(coords, input_dim)
    if pairs:
        keys = sorted(pairs)
        paired = _Stream(groups=keys, order=max(pairs.values()))
        paired.coefs[(1, 0)] = _unit_rows([a for a, _ in keys], input_dim)
        paired.coefs[(0, 1)] = _unit_rows([b for _, b in keys], input_dim)
    return univariate, paired


def jet_eval(
    params: MlpParams,
    arch: MlpArchitecture,
    base,
    request: Iterable[Iterable[int]],
) -> Jet:
    """Exact partial derivatives (order <= 3, <= 2 active inputs) at a batch of points."""
    params.check(arch, require_finite=False)
    x, _ = as_batch(base, arch)
    indices = {validate_multi_index(index, arch.input_dim) for index in request}
    univariate, paired = _plan(indices, arch.input_dim)
    streams = [s for s in (univariate, paired) if s is not None]

    layers = list(zip(params.weights, params.biases))
    h = x
    value = x
    for layer, (w, b) in enumerate(layers):
        z = h @ w.T + b
        for stream in streams:
            stream.coefs = {key: c @ w.T for key, c in stream.coefs.items()}
        if layer == len(layers) - 1:
            value = z
            break
        t = torch.tanh(z)
        for stream in streams:
            stream.coefs = _compose_tanh(t, stream.coefs, stream.order)
        h = t

    n_points, n_out = value.shape
    derivatives: Dict[MultiIndex, torch.Tensor] = {}
    for index in indices:
        active = [k for k, e in enumerate(index) if e]
        if not active:
            continue
        if len(active) == 1:
            stream = univariate
            group = stream.groups.index(active[0])
            key = (index[active[0]], 0)
        else:
            stream = paired
            group = stream.groups.index((active[0], active[1]))
            key = (index[active[0]], index[active[1]])
        coef = stream.coefs.get(key)
        if coef is None:
            derivatives[index] = torch.zeros(n_points, n_out, dtype=DTYPE)
            continue
        scale = float(math.factorial(key[0]) * math.factorial(key[1]))
        derivatives[index] = scale * coef[group].expand(n_points, n_out)
    return Jet(base=x, value=value, derivatives=derivatives)
