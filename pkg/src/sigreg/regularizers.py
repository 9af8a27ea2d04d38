"""Isotropic-Gaussian regularization losses with analytic batch gradients.

Two variants, both pushing a batch of embeddings Z (N x C) toward N(0, I):

* ``weak_sigreg``  — second moment only: the covariance of a random sketch
  of the batch is driven to the identity through its Frobenius distance.
  Works entirely in the K-dimensional sketch space, so no C x C matrix is
  ever formed (auxiliary storage is O(NK + CK + K^2)).
* ``strong_sigreg`` — full distribution: the empirical characteristic
  function of the batch along K random unit directions is matched against
  the standard-Gaussian characteristic function exp(-t^2/2) on a weighted
  quadrature grid.

Both return the loss value together with its exact derivative with respect
to Z, so they can be injected into any backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateBatchError, ShapeMismatchError
from .linalg import COVARIANCE_EPS, Matrix, draw_sketch
from .rng import RngStream


@dataclass(frozen=True)
class SigregConfig:
    """Settings for either regularizer variant.

    ``resample="per_step"`` draws a fresh sketch from the caller's stream on
    every evaluation; ``"fixed"`` derives the sketch from ``rng.child("sketch")``
    instead, which is a pure function of the stream identity, so repeated
    evaluations are bit-identical and the sketch is externally re-derivable.
    """

    variant: str = "weak"
    sketch_dim: int = 64
    integration_points: int = 17
    t_max: float = 5.0
    alpha: float = 0.1
    resample: str = "per_step"

    def __post_init__(self) -> None:
        if self.variant not in ("weak", "strong"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.sketch_dim < 1:
            raise ConfigError(f"sketch_dim must be >= 1, got {self.sketch_dim}")
        if self.integration_points < 3 or self.integration_points % 2 == 0:
            raise ConfigError(
                f"integration_points must be odd and >= 3, got {self.integration_points}"
            )
        if not self.t_max > 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.resample not in ("per_step", "fixed"):
            raise ConfigError(f"unknown resample policy {self.resample!r}")


@dataclass(frozen=True)
class LossWithGrad:
    """A scalar loss and its gradient with respect to the input batch."""

    value: float
    grad: Matrix


@dataclass(frozen=True)
class QuadratureGrid:
    """Integration points and strictly positive weights, symmetric about 0."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        wts = np.asarray(self.weights, dtype=np.float64)
        if pts.shape != wts.shape or pts.ndim != 1:
            raise ConfigError("points and weights must be 1-D and equal length")
        if np.max(np.abs(pts + pts[::-1])) > 1e-12:
            raise ConfigError("grid points must be symmetric about 0")
        if not np.all(wts > 0) or not wts.sum() > 0:
            raise ConfigError("weights must be strictly positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)


def gaussian_trapezoid_grid(t_max: float, n_points: int) -> QuadratureGrid:
    """Uniform grid on [-t_max, t_max], trapezoid weights damped by the
    standard normal pdf so high-|t| noise in the empirical CF is discounted."""
    pts = np.linspace(-t_max, t_max, n_points)
    step = 2.0 * t_max / (n_points - 1)
    trap = np.full(n_points, step)
    trap[0] = trap[-1] = step / 2.0
    pdf = np.exp(-0.5 * pts * pts) / math.sqrt(2.0 * math.pi)
    return QuadratureGrid(points=pts, weights=pdf * trap)


def _sketch_stream(cfg: SigregConfig, rng: RngStream) -> RngStream:
    return rng if cfg.resample == "per_step" else rng.child("sketch")


def weak_sigreg(z: Matrix, cfg: SigregConfig, rng: RngStream) -> LossWithGrad:
    """Frobenius distance between the sketched batch covariance and I.

    Pipeline: sketch (skipped when C <= K, in which case the effective
    dimension is C), center columns, covariance with divisor N - 1 + 1e-6,
    then ||cov - I||_F.  The gradient is the exact chain rule back through
    those four steps:

        D      = (cov - I) / ||cov - I||_F
        dL/dY  = 2 Y D / (N - 1 + 1e-6)        (Y = centered sketch)
        dL/dP  = dL/dY - column_means(dL/dY)    (back through centering)
        dL/dZ  = dL/dP @ S                      (back through the sketch)

    At the non-differentiable point ||cov - I||_F = 0 the zero matrix is
    returned (a valid subgradient, and the stable choice at the optimum).
    """
    z = np.asarray(z, dtype=np.float64)
    n, c = z.shape
    if n < 2:
        raise DegenerateBatchError(f"weak_sigreg needs at least 2 rows, got {n}")

    sketch = None
    if c > cfg.sketch_dim:
        sketch = draw_sketch(_sketch_stream(cfg, rng), cfg.sketch_dim, c)
        p = z @ sketch.entries.T  # N x K
    else:
        p = z  # effective sketch dimension is C
    k = p.shape[1]

    y = p - p.mean(axis=0, keepdims=True)
    m = n - 1 + COVARIANCE_EPS
    cov = (y.T @ y) / m  # K x K
    delta = cov - np.eye(k)
    value = float(np.sqrt(np.sum(delta * delta)))

    if value == 0.0:
        return LossWithGrad(value=0.0, grad=np.zeros_like(z))

    g_y = (2.0 / m) * (y @ (delta / value))
    g_p = g_y - g_y.mean(axis=0, keepdims=True)
    grad = g_p @ sketch.entries if sketch is not None else g_p
    return LossWithGrad(value=value, grad=grad)


def strong_sigreg(z: Matrix, cfg: SigregConfig, rng: RngStream) -> LossWithGrad:
    """Empirical-CF distance to the standard Gaussian along random directions.

    K unit directions a_k are the normalized rows of a Gaussian sketch
    (clamped to at most C directions, mirroring the weak variant's no-sketch
    branch).  With projections p_nk = z_n . a_k,

        value = (1/K) sum_k sum_j w_j |phi_k(t_j) - exp(-t_j^2/2)|^2,
        phi_k(t) = (1/N) sum_n exp(i t p_nk).

    The gradient w.r.t. Z follows from d(Re phi)/dp = -(t/N) sin(t p) and
    d(Im phi)/dp = (t/N) cos(t p), accumulated per grid point and mapped
    back through the projection.
    """
    z = np.asarray(z, dtype=np.float64)
    n, c = z.shape
    if n < 2:
        raise DegenerateBatchError(f"strong_sigreg needs at least 2 rows, got {n}")

    k = min(cfg.sketch_dim, c)
    sketch = draw_sketch(_sketch_stream(cfg, rng), k, c)
    norms = np.sqrt(np.sum(sketch.entries * sketch.entries, axis=1, keepdims=True))
    directions = sketch.entries / norms  # K x C, unit rows
    p = z @ directions.T  # N x K

    grid = gaussian_trapezoid_grid(cfg.t_max, cfg.integration_points)
    value = 0.0
    g_p = np.zeros_like(p)
    for t, w in zip(grid.points, grid.weights):
        ang = t * p
        cos_tp = np.cos(ang)
        sin_tp = np.sin(ang)
        re = cos_tp.mean(axis=0)  # (K,)
        im = sin_tp.mean(axis=0)
        target = math.exp(-0.5 * t * t)
        re_err = re - target
        value += w * float(np.sum(re_err * re_err + im * im))
        g_p += (2.0 * w * t / n) * (im * cos_tp - re_err * sin_tp)

    value /= k
    grad = (g_p @ directions) / k
    return LossWithGrad(value=value, grad=grad)


def combined_loss(task: LossWithGrad, reg: LossWithGrad, alpha: float) -> LossWithGrad:
    """task + alpha * reg, gradients summed at the shared attachment tensor."""
    if task.grad.shape != reg.grad.shape:
        raise ShapeMismatchError(
            f"combined_loss: grad shapes differ, {task.grad.shape} vs {reg.grad.shape}"
        )
    return LossWithGrad(
        value=task.value + alpha * reg.value,
        grad=task.grad + alpha * reg.grad,
    )
