import logging
import string
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.exceptions import EstimatorError
from app.fields import FieldEstimate, Provenance, Quantity
from app.sde.simulate import PathEnsemble

logger = logging.getLogger(__name__)

MIN_KDE_SAMPLES = 100
CHF_CHUNK = 64
KDE_CHUNK = 16384


def empirical_chf(ensemble: PathEnsemble, t: float, u_points) -> np.ndarray:
    """Sample mean of exp(i u'X(t)) for every row of u_points."""
    x = ensemble.at(t)
    u = np.atleast_2d(np.asarray(u_points, dtype=float))
    if u.shape[-1] != ensemble.dim:
        raise EstimatorError(f"u points have {u.shape[-1]} coordinates, states have {ensemble.dim}")
    out = np.empty(u.shape[0], dtype=complex)
    for start in range(0, u.shape[0], CHF_CHUNK):
        phase = x @ u[start : start + CHF_CHUNK].T
        out[start : start + CHF_CHUNK] = np.cos(phase).mean(axis=0) + 1j * np.sin(phase).mean(axis=0)
    return out


def silverman_bandwidth(samples: np.ndarray, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Per-coordinate normal-reference bandwidths; degenerate axes fall back to the grid spacing."""
    n, d = samples.shape
    sigma = samples.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    factor = (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))
    bandwidth = sigma * factor
    for k, axis in enumerate(axes):
        if bandwidth[k] <= 0.0:
            axis = np.asarray(axis, dtype=float)
            bandwidth[k] = float(axis[1] - axis[0]) if axis.size > 1 else 1.0
    return bandwidth


def kde(
    ensemble: PathEnsemble,
    t: float,
    axes: Sequence[np.ndarray],
    bandwidth: Optional[Sequence[float]] = None,
    coordinates: Optional[Sequence[int]] = None,
) -> FieldEstimate:
    """Gaussian product-kernel density estimate of X(t) on a tensor grid.

    `coordinates` selects a marginal; by default every coordinate is used.
    """
    x = ensemble.at(t)
    if coordinates is not None:
        x = x[:, list(coordinates)]
    n, d = x.shape
    if n < MIN_KDE_SAMPLES:
        raise EstimatorError(f"kde needs at least {MIN_KDE_SAMPLES} samples, got {n}")
    if len(axes) != d:
        raise EstimatorError(f"grid has {len(axes)} axes, states have {d} coordinates")
    axes = [np.asarray(a, dtype=float) for a in axes]
    h = (
        silverman_bandwidth(x, axes)
        if bandwidth is None
        else np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,)).copy()
    )
    logger.debug("kde at t=%g with bandwidths %s", t, h.tolist())

    letters = string.ascii_lowercase[: d]
    spec = ",".join(f"z{c}" for c in letters) + "->" + letters
    density = np.zeros(tuple(len(a) for a in axes))
    for start in range(0, n, KDE_CHUNK):
        chunk = x[start : start + KDE_CHUNK]
        kernels = [
            stats.norm.pdf((axes[k][None, :] - chunk[:, k : k + 1]) / h[k]) / h[k]
            for k in range(d)
        ]
        density += np.einsum(spec, *kernels)
    density /= n
    return FieldEstimate(
        axes=tuple(axes),
        values=density,
        time=float(t),
        provenance=Provenance.MONTE_CARLO,
        quantity=Quantity.PDF,
        label="kde",
    )


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    time: float
    coordinate: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def area(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))


def histogram(
    ensemble: PathEnsemble,
    t: float,
    coordinate: int,
    bins: int,
    value_range: Optional[Tuple[float, float]] = None,
) -> Histogram:
    samples = ensemble.at(t)[:, coordinate]
    density, edges = np.histogram(samples, bins=bins, range=value_range, density=True)
    return Histogram(edges=edges, density=density, time=float(t), coordinate=coordinate)
