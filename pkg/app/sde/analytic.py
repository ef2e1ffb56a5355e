"""Closed-form references used by tests and comparisons."""

import numpy as np
from scipy import stats

from app.exceptions import ConfigurationError


def gaussian_diffusion_pdf(x, t, sigma: float = 1.0, nu: float = 1.0):
    """pdf of X(t) for dX = sigma dB, X(0) ~ N(0, nu)."""
    variance = nu + sigma**2 * np.asarray(t, dtype=float)
    return stats.norm.pdf(x, scale=np.sqrt(variance))


def gaussian_diffusion_chf(u, t, sigma: float = 1.0, nu: float = 1.0):
    variance = nu + sigma**2 * np.asarray(t, dtype=float)
    return np.exp(-0.5 * variance * np.asarray(u, dtype=float) ** 2)


def verhulst_stationary_pdf(x, rho: float = 2.0, sigma: float = 1.0):
    """Stationary law of dX = (rho X - X^2) dt + sigma X dB: gamma(2 rho/sigma^2 - 1, sigma^2/2)."""
    shape = 2.0 * rho / sigma**2 - 1.0
    if shape <= 0:
        raise ConfigurationError(
            f"no stationary density for rho={rho}, sigma={sigma} (needs 2 rho > sigma^2)"
        )
    return stats.gamma.pdf(x, a=shape, scale=sigma**2 / 2.0)


def verhulst_stationary_mean(rho: float = 2.0, sigma: float = 1.0) -> float:
    return (2.0 * rho / sigma**2 - 1.0) * sigma**2 / 2.0


def gaussian_chf(u, mean, cov):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    return np.exp(1j * (u @ mean) - 0.5 * np.einsum("ni,ij,nj->n", u, cov, u))

