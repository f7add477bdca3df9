"""Gaussian kernel density smoothing of per-pixel depth distributions.

Turns a pixel's discrete distribution into a smooth PDF over depth,
f(d) = sum_k w_k * N(d; midpoint_k, sigma), with analytic derivative.
Kernels live at linear-depth midpoints and share one bandwidth.

The scalar functions here are the exact reference path (no kernel cutoff);
the solver uses the batch implementation in `_kernels`, which may skip
kernels beyond CUTOFF_SIGMAS standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRangeError

# Floor applied inside the log so the cost stays finite far outside the range.
DENSITY_FLOOR = 1e-30

DEFAULT_SIGMA = 0.1

# Batch-path kernel cutoff; exp(-8^2/2) ~ 1.3e-14 keeps the truncation far
# below every test tolerance, including the 1e-9 quadrature check.
CUTOFF_SIGMAS = 8.0


@dataclass(frozen=True)
class SmoothedRay:
    """One pixel's mixture: weights over bin-midpoint kernel centers."""

    weights: np.ndarray  # (K,) nonnegative, sums to 1
    centers: np.ndarray  # (K,) metres
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidRangeError("sigma must be positive")
        if np.any(np.asarray(self.weights) < 0):
            raise InvalidRangeError("weights must be nonnegative")


def _gaussians(ray: SmoothedRay, d: float) -> np.ndarray:
    z = (d - ray.centers) / ray.sigma
    return np.exp(-0.5 * z * z) / (ray.sigma * math.sqrt(2.0 * math.pi))


def pdf_value(ray: SmoothedRay, d: float) -> float:
    """Mixture density at depth d."""
    return float(ray.weights @ _gaussians(ray, d))


def pdf_derivative(ray: SmoothedRay, d: float) -> float:
    """d/dd of the mixture density."""
    g = _gaussians(ray, d)
    return float(ray.weights @ (g * (ray.centers - d) / ray.sigma**2))


def neg_log_pdf_and_grad(ray: SmoothedRay, d: float) -> tuple[float, float]:
    """(-ln max(f, floor), -f'/max(f, floor)): the solver's unary cost and slope."""
    g = _gaussians(ray, d)
    f = float(ray.weights @ g)
    fp = float(ray.weights @ (g * (ray.centers - d) / ray.sigma**2))
    denom = max(f, DENSITY_FLOOR)
    return -math.log(denom), -fp / denom
