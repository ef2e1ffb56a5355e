import logging
from typing import Callable, Dict, List, Sequence

import numpy as np
import pandas as pd
import torch

from app.fields import FieldEstimate, mesh_of
from app.net.mlp import DTYPE
from app.sde.model import SdeModel
from app.train.domain import DomainBox

logger = logging.getLogger(__name__)

ORIGIN_TOL = 1e-2
MODULUS_TOL = 1.05

Density = Callable[[torch.Tensor], torch.Tensor]


def _face_points(box: DomainBox, coordinate: int, side: str, n_face: int, times) -> np.ndarray:
    lower, upper = box.bounds(include_time=False)
    axes = [np.linspace(lo, hi, n_face) for lo, hi in zip(lower, upper)]
    axes[coordinate] = np.array([lower[coordinate] if side == "lower" else upper[coordinate]])
    axes.append(np.asarray(times, dtype=float))
    return mesh_of(axes)


def boundary_audit(
    density: Density,
    model: SdeModel,
    box: DomainBox,
    times: Sequence[float],
    n_face: int = 21,
) -> pd.DataFrame:
    """Largest |a_i f|, |B_ij f| and |d_i(B_ij f)| on every face of the box.

    density maps points (x, t) to f; it must be differentiable in x.
    One row per face and condition.
    """
    d = model.dim
    B = model.diffusion_matrix()
    rows: List[Dict] = []
    for k in range(d):
        for side in ("lower", "upper"):
            points = torch.tensor(_face_points(box, k, side, n_face, times), dtype=DTYPE)
            points.requires_grad_(True)
            f = density(points)
            (grad,) = torch.autograd.grad(f.sum(), points)
            f, grad = f.detach().numpy(), grad.detach().numpy()
            x = points.detach().numpy()[:, :d]

            drift = max(
                (float(np.max(np.abs(a.evaluate(x) * f))) for a in model.drift), default=0.0
            )
            diffusion = 0.0
            gradient = 0.0
            for i in range(d):
                for j in range(d):
                    if B[i][j].is_zero:
                        continue
                    b_ij = B[i][j].evaluate(x)
                    diffusion = max(diffusion, float(np.max(np.abs(b_ij * f))))
                    flux = B[i][j].diff(i).evaluate(x) * f + b_ij * grad[:, i]
                    gradient = max(gradient, float(np.max(np.abs(flux))))
            face = f"x{k + 1}={side}"
            rows.append({"face": face, "condition": "drift_flux", "max_abs": drift})
            rows.append({"face": face, "condition": "diffusion", "max_abs": diffusion})
            rows.append({"face": face, "condition": "diffusion_gradient", "max_abs": gradient})
    report = pd.DataFrame(rows, columns=["face", "condition", "max_abs"])
    logger.info("boundary audit: largest face value %.3g", report["max_abs"].max())
    return report


def _origin_index(field: FieldEstimate):
    index = []
    distance = 0.0
    for axis in field.axes:
        j = int(np.argmin(np.abs(axis)))
        index.append(j)
        distance = max(distance, float(abs(axis[j])))
    return tuple(index), distance


def _face_modulus(field: FieldEstimate) -> float:
    modulus = np.abs(field.values)
    best = 0.0
    for k in range(field.dim):
        for end in (0, -1):
            best = max(best, float(np.max(np.take(modulus, [end], axis=k))))
    return best


def chf_constraint_audit(
    fields: Sequence[FieldEstimate],
    origin_tol: float = ORIGIN_TOL,
    modulus_tol: float = MODULUS_TOL,
) -> dict:
    """phi(0,t) = 1, |phi| <= 1 and decay towards the box faces, per time slice."""
    slices = []
    flags = []
    for field in fields:
        index, distance = _origin_index(field)
        origin_error = float(abs(field.values[index] - 1.0))
        max_modulus = float(np.max(np.abs(field.values)))
        entry = {
            "time": field.time,
            "origin_error": origin_error,
            "origin_distance": distance,
            "max_modulus": max_modulus,
            "face_modulus": _face_modulus(field),
        }
        slices.append(entry)
        if origin_error > origin_tol:
            flags.append(f"t={field.time:g}: |phi(0,t) - 1| = {origin_error:.3g}")
        if max_modulus > modulus_tol:
            flags.append(f"t={field.time:g}: max |phi| = {max_modulus:.3g}")
    for flag in flags:
        logger.warning("chf constraint: %s", flag)
    return {
        "slices": slices,
        "max_origin_error": max((s["origin_error"] for s in slices), default=0.0),
        "max_modulus": max((s["max_modulus"] for s in slices), default=0.0),
        "flags": flags,
        "ok": not flags,
    }


def residual_scatter(residuals, norms, bins: int = 20) -> pd.DataFrame:
    """Equal-width bins over the observed norm range with the mean |residual| per bin.

    Empty bins are kept with count 0 and a NaN mean.
    """
    residuals = np.abs(np.asarray(residuals, dtype=float).reshape(-1))
    norms = np.asarray(norms, dtype=float).reshape(-1)
    lo, hi = float(norms.min()), float(norms.max())
    width = (hi - lo) / bins if hi > lo else 1.0
    index = np.clip(np.floor((norms - lo) / width).astype(int), 0, bins - 1)
    counts = np.bincount(index, minlength=bins)
    sums = np.bincount(index, weights=residuals, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    edges = lo + width * np.arange(bins + 1)
    return pd.DataFrame(
        {
            "norm_lo": edges[:-1],
            "norm_hi": edges[1:],
            "center": 0.5 * (edges[:-1] + edges[1:]),
            "count": counts,
            "mean_abs_residual": means,
        }
    )


def outer_monotone(table: pd.DataFrame) -> bool:
    """True when bin means do not decrease over the outer half of the norm range."""
    middle = 0.5 * (table["norm_lo"].iloc[0] + table["norm_hi"].iloc[-1])
    outer = table[(table["center"] >= middle) & (table["count"] > 0)]
    return bool(np.all(np.diff(outer["mean_abs_residual"].to_numpy()) >= 0.0))
