"""Finite-difference verification of every analytic gradient in the library.

``run_gradcheck`` sweeps the regularizers over a grid of seeded
(N, C, K) configurations, checks the cross-entropy head, and finishes with
whole-model checks (cross-entropy plus an attached regularizer,
differentiated through every weight and bias).  Per configuration, the
reported error is

    max_i |analytic_i - fd_i| / max(1e-6, max_i |fd_i|)

i.e. the worst coordinate relative to the gradient's own magnitude; a plain
per-coordinate ratio would blow up on near-zero coordinates where central
differences bottom out at cancellation noise (~1e-11).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .network import backward, cross_entropy, forward, init_mlp
from .regularizers import SigregConfig, strong_sigreg, weak_sigreg
from .rng import RngStream

DEFAULT_TOLERANCE = 1e-5
DEFAULT_STEP = 1e-5

# The regularizer sweep: 8 shape combinations x 3 seed rounds, trimmed to 20.
_SHAPES = list(product((4, 32), (8, 128), (4, 16)))  # (N, C, K)
REGULARIZER_SWEEP = [
    (n, c, k, 1000 + round_idx)
    for round_idx in range(3)
    for (n, c, k) in _SHAPES
][:20]


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    Perturbs ``x`` in place one coordinate at a time and restores it, so
    ``fn`` must not retain references between calls.
    """
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        original = flat_x[i]
        flat_x[i] = original + h
        f_plus = fn(x)
        flat_x[i] = original - h
        f_minus = fn(x)
        flat_x[i] = original
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class GradCheckCase:
    name: str
    max_error: float
    worst_coordinate: tuple[int, ...]
    passed: bool


@dataclass(frozen=True)
class GradcheckReport:
    cases: list[GradCheckCase]
    tolerance: float
    elapsed_s: float

    @property
    def passed(self) -> bool:
        return all(case.passed for case in self.cases)

    def format_table(self) -> str:
        width = max(len(c.name) for c in self.cases)
        lines = [f"{'case'.ljust(width)}  {'max_rel_err':>12}  worst_coord  status"]
        for c in self.cases:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{c.name.ljust(width)}  {c.max_error:12.3e}  "
                f"{str(c.worst_coordinate):11}  {status}"
            )
        lines.append(
            f"{len(self.cases)} checks, tolerance {self.tolerance:g}, "
            f"{self.elapsed_s:.1f}s: {'PASS' if self.passed else 'FAIL'}"
        )
        return "\n".join(lines)


def _compare(
    name: str,
    analytic: np.ndarray,
    fd: np.ndarray,
    tolerance: float,
    corrupt: Callable[[np.ndarray], np.ndarray] | None,
) -> GradCheckCase:
    if corrupt is not None:
        analytic = corrupt(analytic)
    diff = np.abs(analytic - fd)
    scale = max(float(np.max(np.abs(fd))), 1e-6)
    worst_flat = int(np.argmax(diff))
    max_error = float(diff.reshape(-1)[worst_flat]) / scale
    return GradCheckCase(
        name=name,
        max_error=max_error,
        worst_coordinate=tuple(
            int(i) for i in np.unravel_index(worst_flat, analytic.shape)
        ),
        passed=max_error < tolerance,
    )


def _regularizer_cases(tolerance, h, corrupt):
    cases = []
    for variant, fn in (("weak", weak_sigreg), ("strong", strong_sigreg)):
        for n, c, k, seed in REGULARIZER_SWEEP:
            # fixed resampling: FD re-evaluates the loss thousands of times
            # and must see the same sketch on every call
            cfg = SigregConfig(variant=variant, sketch_dim=k, resample="fixed")
            rng = RngStream(seed, 17)
            z = RngStream(seed, 23).normal((n, c))
            analytic = fn(z, cfg, rng).grad
            fd = central_difference(lambda x: fn(x, cfg, rng).value, z, h)
            cases.append(
                _compare(
                    f"{variant} N={n} C={c} K={k} seed={seed}",
                    analytic,
                    fd,
                    tolerance,
                    corrupt,
                )
            )
    return cases


def _cross_entropy_cases(tolerance, h, corrupt):
    cases = []
    for n, num_classes, seed in ((8, 5, 31), (16, 10, 32)):
        logits = RngStream(seed, 41).normal((n, num_classes)) * 2.0
        labels = RngStream(seed, 43).integers(0, num_classes, size=n)
        analytic = cross_entropy(logits, labels).grad
        fd = central_difference(lambda x: cross_entropy(x, labels).value, logits, h)
        cases.append(
            _compare(
                f"cross_entropy N={n} classes={num_classes}",
                analytic,
                fd,
                tolerance,
                corrupt,
            )
        )
    return cases


def _full_model_cases(tolerance, h, corrupt):
    """FD through every parameter of a small net with an attached regularizer."""
    cases = []
    widths = [8, 16, 16, 16, 4]
    n, alpha, attach = 16, 0.1, 3
    for variant, fn in (("weak", weak_sigreg), ("strong", strong_sigreg)):
        cfg = SigregConfig(variant=variant, sketch_dim=8, resample="fixed")
        reg_rng = RngStream(7, 71)
        model = init_mlp(widths, RngStream(7, 73))
        batch = RngStream(7, 79).normal((n, widths[0]))
        labels = RngStream(7, 83).integers(0, widths[-1], size=n)

        def total_loss() -> float:
            trace = forward(model, batch)
            task = cross_entropy(trace.logits, labels)
            reg = fn(trace.activations[attach], cfg, reg_rng)
            return task.value + alpha * reg.value

        trace = forward(model, batch)
        task = cross_entropy(trace.logits, labels)
        reg = fn(trace.activations[attach], cfg, reg_rng)
        grads = backward(model, trace, task.grad, attach, alpha * reg.grad)

        for layer in range(model.depth):
            for params, analytic, kind in (
                (model.weights[layer], grads.weights[layer], "W"),
                (model.biases[layer], grads.biases[layer], "b"),
            ):
                fd = central_difference(lambda _p: total_loss(), params, h)
                cases.append(
                    _compare(
                        f"model+{variant} {kind}{layer}",
                        analytic,
                        fd,
                        tolerance,
                        corrupt,
                    )
                )
    return cases


def run_gradcheck(
    tolerance: float = DEFAULT_TOLERANCE,
    h: float = DEFAULT_STEP,
    corrupt: Callable[[np.ndarray], np.ndarray] | None = None,
) -> GradcheckReport:
    """Run the full sweep.  ``corrupt``, when given, perturbs each analytic
    gradient before comparison; it exists so the negative-control test can
    prove the check actually fails on wrong gradients.  Not exposed on the
    CLI."""
    start = time.perf_counter()
    cases = []
    cases += _regularizer_cases(tolerance, h, corrupt)
    cases += _cross_entropy_cases(tolerance, h, corrupt)
    cases += _full_model_cases(tolerance, h, corrupt)
    return GradcheckReport(
        cases=cases,
        tolerance=tolerance,
        elapsed_s=time.perf_counter() - start,
    )
