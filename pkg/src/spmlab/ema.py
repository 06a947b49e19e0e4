"""Dual exponential moving averages for pseudo-label generation.

Two averages run side by side: a weight-space EMA (the teacher model,
updated once per optimizer step) and a prediction-space EMA (per-sample
smoothed student outputs, updated whenever a sample is forwarded).
Pseudo-labels fuse the two with a convex coefficient gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import as_matrix

__all__ = [
    "DualEmaState",
    "init_dual_ema",
    "ema_update_weights",
    "ema_update_predictions",
    "make_pseudo_labels",
]


@dataclass
class DualEmaState:
    teacher_params: np.ndarray        # flat copy of the student parameter vector
    smoothed_preds: np.ndarray        # n_train x C, rows valid once visited
    visited: np.ndarray               # bool per training sample
    beta_t: float = 0.999
    beta_s: float = 0.8
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("beta_t", "beta_s", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def init_dual_ema(student_params, n_train: int, n_classes: int,
                  beta_t: float = 0.999, beta_s: float = 0.8,
                  gamma: float = 0.5) -> DualEmaState:
    """Teacher starts as a copy of the student; predictions start unvisited."""
    theta = np.asarray(student_params, dtype=np.float64).copy()
    return DualEmaState(
        teacher_params=theta,
        smoothed_preds=np.zeros((n_train, n_classes)),
        visited=np.zeros(n_train, dtype=bool),
        beta_t=beta_t,
        beta_s=beta_s,
        gamma=gamma,
    )


def ema_update_weights(state: DualEmaState, student_params) -> DualEmaState:
    """teacher <- beta_t * teacher + (1 - beta_t) * student, elementwise."""
    theta = np.asarray(student_params, dtype=np.float64)
    if theta.shape != state.teacher_params.shape:
        raise ValueError(
            f"student parameters have shape {theta.shape}, "
            f"teacher holds {state.teacher_params.shape}"
        )
    state.teacher_params = state.beta_t * state.teacher_params + (1.0 - state.beta_t) * theta
    return state


def ema_update_predictions(state: DualEmaState, sample_indices, p_batch) -> DualEmaState:
    """Per-sample prediction smoothing; a first visit copies the prediction."""
    idx = np.asarray(sample_indices, dtype=np.intp)
    p = as_matrix(p_batch, "p_batch")
    if np.any(idx < 0) or np.any(idx >= state.smoothed_preds.shape[0]):
        raise ValueError("sample index out of range")
    if p.shape != (idx.size, state.smoothed_preds.shape[1]):
        raise ValueError(
            f"p_batch has shape {p.shape}, expected {(idx.size, state.smoothed_preds.shape[1])}"
        )
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("predictions must lie in [0, 1]")
    seen = state.visited[idx]
    old = state.smoothed_preds[idx]
    mixed = state.beta_s * old + (1.0 - state.beta_s) * p
    state.smoothed_preds[idx] = np.where(seen[:, None], mixed, p)
    state.visited[idx] = True
    return state


def make_pseudo_labels(state: DualEmaState, teacher_probs, sample_indices,
                       student_probs=None) -> np.ndarray:
    """Fuse teacher and smoothed-student predictions into pseudo-labels.

    t = gamma * p_teacher + (1 - gamma) * p_student_smoothed. Passing
    ``student_probs`` bypasses the prediction EMA (the raw-student
    ablation); otherwise the stored smoothed predictions are used and
    every requested sample must have been visited.
    """
    idx = np.asarray(sample_indices, dtype=np.intp)
    p_t = as_matrix(teacher_probs, "teacher_probs")
    if np.any(idx < 0) or np.any(idx >= state.smoothed_preds.shape[0]):
        raise ValueError("sample index out of range")
    if p_t.shape != (idx.size, state.smoothed_preds.shape[1]):
        raise ValueError(
            f"teacher_probs has shape {p_t.shape}, "
            f"expected {(idx.size, state.smoothed_preds.shape[1])}"
        )
    if student_probs is None:
        if not np.all(state.visited[idx]):
            raise ValueError("pseudo-labels requested for samples never visited")
        p_s = state.smoothed_preds[idx]
    else:
        p_s = as_matrix(student_probs, "student_probs")
        if p_s.shape != p_t.shape:
            raise ValueError(
                f"student_probs has shape {p_s.shape}, expected {p_t.shape}"
            )
    for name, arr in (("teacher_probs", p_t), ("student_probs", p_s)):
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError(f"{name} must lie in [0, 1]")
    return state.gamma * p_t + (1.0 - state.gamma) * p_s
