"""Collapse diagnostics and task metrics.

These deliberately pay the full C x C covariance cost the losses avoid:
diagnostics must stay independent of the sketching mechanism they judge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatchError, ShapeMismatchError, SpectrumError
from .linalg import Matrix, center_columns, covariance, symmetric_eigenvalues

NEGATIVE_EIGENVALUE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class CollapseReport:
    effective_rank: float
    eigen_entropy: float
    condition_number: float
    top_eigen_fraction: float
    embedding_dim: int


def _clean_spectrum(eigenvalues) -> np.ndarray:
    evals = np.asarray(eigenvalues, dtype=np.float64)
    if evals.ndim != 1 or evals.size == 0:
        raise SpectrumError(f"expected a 1-D spectrum, got shape {evals.shape}")
    if evals.min() < -NEGATIVE_EIGENVALUE_TOLERANCE:
        raise SpectrumError(
            f"eigenvalue {evals.min():.3e} below -{NEGATIVE_EIGENVALUE_TOLERANCE}"
        )
    return np.maximum(evals, 0.0)


def effective_rank(eigenvalues) -> float:
    """exp of the Shannon entropy of the normalized spectrum.

    Equals the dimension for a uniform spectrum and 1 for a one-hot
    spectrum; scale- and permutation-invariant in between.
    """
    evals = _clean_spectrum(eigenvalues)
    total = evals.sum()
    if total == 0.0:
        raise SpectrumError("effective rank undefined for an all-zero spectrum")
    p = evals / total
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))


def eigen_entropy(eigenvalues) -> float:
    """Shannon entropy of the normalized spectrum (log of effective rank)."""
    evals = _clean_spectrum(eigenvalues)
    total = evals.sum()
    if total == 0.0:
        raise SpectrumError("entropy undefined for an all-zero spectrum")
    p = evals / total
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def collapse_report(z: Matrix) -> CollapseReport:
    """Spectral collapse diagnostics of a batch from its exact covariance."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeMismatchError(f"expected 2-D batch, got shape {z.shape}")
    if z.shape[0] < 2:
        raise DegenerateBatchError(f"collapse_report needs N >= 2, got {z.shape[0]}")
    evals = _clean_spectrum(symmetric_eigenvalues(covariance(center_columns(z))))
    total = evals.sum()
    if total == 0.0:
        raise SpectrumError("batch has zero covariance; diagnostics undefined")
    positive = evals[evals > 0]
    return CollapseReport(
        effective_rank=effective_rank(evals),
        eigen_entropy=eigen_entropy(evals),
        condition_number=float(evals[0] / positive.min()),
        top_eigen_fraction=float(evals[0] / total),
        embedding_dim=z.shape[1],
    )


def top1_accuracy(logits: Matrix, labels) -> float:
    """Fraction of rows whose argmax matches the label.

    Ties break toward the lowest class index (argmax returns the first
    maximum), which makes the metric deterministic.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(
            f"logits {logits.shape} incompatible with labels {labels.shape}"
        )
    return float((logits.argmax(axis=1) == labels).mean())
