"""Single-positive label corruption and flip-rate accounting.

Both simulators take a full multi-label ground-truth matrix and keep
exactly one true positive per row: the random protocol picks it uniformly
among the row's positives, the dominant protocol keeps the positive with
the largest scene extent. ``compute_flip_rates`` recovers the per-class
noise rates induced by a corruption.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .net import as_matrix

__all__ = [
    "FlipRateTable",
    "simulate_random_spml",
    "simulate_dominant_spml",
    "compute_flip_rates",
]


def _check_labels(y, name="y_true") -> np.ndarray:
    y = as_matrix(y, name)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError(f"{name} must be binary (0/1 entries)")
    return y


def simulate_random_spml(y_true, rng: np.random.Generator) -> np.ndarray:
    """Keep one positive per row, chosen uniformly among the row's positives."""
    y = _check_labels(y_true)
    out = np.zeros_like(y)
    for i, row in enumerate(y):
        positives = np.flatnonzero(row == 1.0)
        if positives.size == 0:
            raise ValueError(f"row {i} has no positive label")
        keep = positives[rng.integers(0, positives.size)]
        out[i, keep] = 1.0
    return out


def simulate_dominant_spml(y_true, extents) -> np.ndarray:
    """Keep the positive with the largest extent; ties go to the lowest index."""
    y = _check_labels(y_true)
    e = as_matrix(extents, "extents")
    if e.shape != y.shape:
        raise ValueError(f"extents shape {e.shape} does not match labels {y.shape}")
    if np.any(e < 0.0):
        raise ValueError("extents must be non-negative")
    if np.any((e > 0.0) & (y == 0.0)):
        raise ValueError("extents are positive on a cell whose true label is 0")
    if np.any((e == 0.0) & (y == 1.0)):
        raise ValueError("extents are zero on a true-positive cell")
    row_sums = e.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-9):
        raise ValueError("extent rows must sum to 1 over positive classes")
    out = np.zeros_like(y)
    # extents vanish off-support, so the row argmax is a true positive;
    # np.argmax returns the first maximum, giving the lowest-index tie rule
    out[np.arange(y.shape[0]), np.argmax(e, axis=1)] = 1.0
    return out


@dataclass
class FlipRateTable:
    """Per-class single-positive flip rates beta_c = 1 - kept_c / support_c."""

    beta: np.ndarray       # NaN for classes with zero true positives
    support: np.ndarray    # true positives per class
    micro: float           # 1 - total kept / total true positives
    macro: float           # unweighted mean of beta over supported classes

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "beta", "support"])
            for c, (b, s) in enumerate(zip(self.beta, self.support)):
                writer.writerow([c, "" if np.isnan(b) else repr(float(b)), int(s)])
            writer.writerow(["micro_average", repr(float(self.micro)), ""])
            writer.writerow(["macro_average", repr(float(self.macro)), ""])

    @classmethod
    def from_csv(cls, path) -> "FlipRateTable":
        beta, support = [], []
        micro = macro = None
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["class", "beta", "support"]:
            raise ValueError(f"{path}: not a flip-rate table")
        for row in rows[1:]:
            if row[0] == "micro_average":
                micro = float(row[1])
            elif row[0] == "macro_average":
                macro = float(row[1])
            else:
                beta.append(float("nan") if row[1] == "" else float(row[1]))
                support.append(int(row[2]))
        if micro is None or macro is None:
            raise ValueError(f"{path}: missing summary rows")
        return cls(np.array(beta), np.array(support, dtype=np.intp), micro, macro)


def compute_flip_rates(y_true, y_observed) -> FlipRateTable:
    """Flip rates of an observed labeling relative to the ground truth."""
    y = _check_labels(y_true)
    obs = _check_labels(y_observed, "y_observed")
    if obs.shape != y.shape:
        raise ValueError(f"y_observed shape {obs.shape} does not match {y.shape}")
    if np.any(obs > y):
        raise ValueError("y_observed marks a positive the ground truth does not have")
    support = y.sum(axis=0)
    kept = obs.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.where(support > 0, 1.0 - kept / support, np.nan)
    total_true = float(support.sum())
    if total_true == 0:
        raise ValueError("ground truth has no positive labels at all")
    micro = 1.0 - float(kept.sum()) / total_true
    macro = float(np.nanmean(beta))
    return FlipRateTable(
        beta=beta,
        support=support.astype(np.intp),
        micro=micro,
        macro=macro,
    )
