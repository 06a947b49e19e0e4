"""Training objectives on sigmoid probabilities.

Every operation returns a :class:`LossValue` holding the objective scalar
and its analytic gradient with respect to the logits, so a model gradient
is one ``Mlp.backward`` call away. Probabilities are clamped into
``[EPS_CLIP, 1 - EPS_CLIP]`` before any logarithm.

Conventions:

* ``loss_an`` / ``loss_an_ls`` / ``loss_wan`` / ``loss_iun`` and the
  positive term of ``loss_epr`` are unnormalized double sums over the
  batch; the training loop divides them by the batch size.
* the calibration regularizers (``reg_elr_mcc``, ``reg_gc_binary``,
  ``reg_gc``) and the combined ``loss_adagc`` are already averaged over
  the batch, so their weights transfer across batch sizes.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .net import as_matrix

__all__ = [
    "EPS_CLIP",
    "LossValue",
    "loss_an",
    "loss_an_ls",
    "loss_wan",
    "loss_epr",
    "loss_iun",
    "reg_elr_mcc",
    "reg_gc_binary",
    "reg_gc",
    "loss_adagc",
]

EPS_CLIP = 1e-12


class LossValue(NamedTuple):
    value: float
    dlogits: np.ndarray


def _clamp(p) -> np.ndarray:
    p = as_matrix(p, "probabilities")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.clip(p, EPS_CLIP, 1.0 - EPS_CLIP)


def _check_shapes(p, other, name) -> np.ndarray:
    other = as_matrix(other, name)
    if other.shape != p.shape:
        raise ValueError(
            f"{name} has shape {other.shape}, expected {p.shape} to match probabilities"
        )
    return other


def _check_binary(y, name="labels") -> np.ndarray:
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError(f"{name} must be binary (0/1 entries)")
    return y


def _check_unit(t, name="pseudo_labels") -> np.ndarray:
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return t


def _bce_terms(p, targets, w_neg=1.0):
    """Cell-wise BCE with down-weighted negative terms; returns (sum, dlogits)."""
    val = -(targets * np.log(p) + w_neg * ((1.0 - targets) * np.log1p(-p)))
    grad = targets * (p - 1.0) + w_neg * ((1.0 - targets) * p)
    return float(val.sum()), grad


def loss_an(p, y_observed) -> LossValue:
    """Assume-negative BCE: every unobserved label is treated as a negative."""
    p = _clamp(p)
    y = _check_binary(_check_shapes(p, y_observed, "y_observed"), "y_observed")
    value, grad = _bce_terms(p, y)
    return LossValue(value, grad)


def loss_an_ls(p, y_observed, eps_smooth: float) -> LossValue:
    """Assume-negative BCE against label-smoothed targets."""
    if not 0.0 <= eps_smooth < 0.5:
        raise ValueError(f"eps_smooth must be in [0, 0.5), got {eps_smooth}")
    p = _clamp(p)
    y = _check_binary(_check_shapes(p, y_observed, "y_observed"), "y_observed")
    targets = y * (1.0 - eps_smooth) + (1.0 - y) * eps_smooth
    value, grad = _bce_terms(p, targets)
    return LossValue(value, grad)


def loss_wan(p, y_observed, w_neg: float) -> LossValue:
    """Weak assume-negative BCE: negative terms scaled by ``w_neg``."""
    if not 0.0 < w_neg <= 1.0:
        raise ValueError(f"w_neg must be in (0, 1], got {w_neg}")
    p = _clamp(p)
    y = _check_binary(_check_shapes(p, y_observed, "y_observed"), "y_observed")
    value, grad = _bce_terms(p, y, w_neg)
    return LossValue(value, grad)


def loss_epr(p, y_observed, k_expected: float, epr_weight: float = 1.0) -> LossValue:
    """Positive-only BCE plus a squared penalty on the expected label count.

    penalty = epr_weight * (1/n) * sum_i ((sum_c p_ic - k_expected) / C)^2
    """
    p = _clamp(p)
    y = _check_binary(_check_shapes(p, y_observed, "y_observed"), "y_observed")
    n, n_classes = p.shape
    if not 0.0 < k_expected <= n_classes:
        raise ValueError(
            f"k_expected must be in (0, {n_classes}], got {k_expected}"
        )
    pos_value = float(-(y * np.log(p)).sum())
    excess = p.sum(axis=1) - k_expected
    value = pos_value + epr_weight * float(np.mean((excess / n_classes) ** 2))
    grad = y * (p - 1.0)
    grad = grad + (epr_weight * 2.0 * excess / (n * n_classes**2))[:, None] * p * (1.0 - p)
    return LossValue(value, grad)


def loss_iun(p, y_observed, true_negative_mask) -> LossValue:
    """BCE restricted to observed positives and known true negatives.

    Cells outside both sets (the unobserved, possibly-positive labels)
    contribute neither loss nor gradient.
    """
    p = _clamp(p)
    y = _check_binary(_check_shapes(p, y_observed, "y_observed"), "y_observed")
    mask = _check_binary(
        _check_shapes(p, true_negative_mask, "true_negative_mask"),
        "true_negative_mask",
    )
    if np.any((mask == 1.0) & (y == 1.0)):
        raise ValueError("true_negative_mask marks an observed positive as negative")
    value = float(-(y * np.log(p)).sum() - (mask * np.log1p(-p)).sum())
    grad = y * (p - 1.0) + mask * p
    return LossValue(value, grad)


def reg_elr_mcc(p_simplex, t_simplex) -> LossValue:
    """Multi-class calibration term (1/n) sum_i log(1 - <p_i, t_i>).

    Requires simplex rows (probability vectors). The returned gradient is
    taken with respect to softmax logits. Inner products at 1 are clamped
    to 1 - EPS_CLIP before the logarithm. Reference implementation only:
    the binary-label training path never uses it.
    """
    p = as_matrix(p_simplex, "p_simplex")
    t = _check_shapes(p, t_simplex, "t_simplex")
    if np.any(p < 0.0) or np.any(t < 0.0):
        raise ValueError("simplex entries must be non-negative")
    for name, arr in (("p_simplex", p), ("t_simplex", t)):
        sums = arr.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError(f"{name} rows must sum to 1 (tolerance 1e-9)")
    n = p.shape[0]
    ip = (p * t).sum(axis=1)
    ipc = np.minimum(ip, 1.0 - EPS_CLIP)
    value = float(np.log1p(-ipc).mean())
    # per-cell: p_c * sum_k (t_k - t_c) p_k / (1 - <p, t>)
    sp = p.sum(axis=1)
    g = p * (ip[:, None] - t * sp[:, None]) / (1.0 - ipc)[:, None]
    return LossValue(value, g / n)


def reg_gc_binary(p, t) -> LossValue:
    """Class-wise binary calibration over all cells.

    (1/n) sum_ic log(1 - <b_ic, t_ic>) with b = [p, 1-p] and the target
    vector [t, 1-t]; dominated by negative labels, kept as a reference.
    """
    p = _clamp(p)
    t = _check_unit(_check_shapes(p, t, "pseudo_labels"))
    n = p.shape[0]
    ip = p * t + (1.0 - p) * (1.0 - t)
    ipc = np.minimum(ip, 1.0 - EPS_CLIP)
    value = float(np.log1p(-ipc).sum() / n)
    grad = -(2.0 * t - 1.0) / (1.0 - ipc) * p * (1.0 - p) / n
    return LossValue(value, grad)


def _gc_core(p, t, include):
    """Shared calibration kernel over the cells selected by ``include``."""
    n = p.shape[0]
    pt = np.minimum(p * t, 1.0 - EPS_CLIP)
    value = float(np.where(include, np.log1p(-pt), 0.0).sum() / n)
    grad = np.where(include, -t / (1.0 - pt) * p * (1.0 - p), 0.0) / n
    return value, grad


def reg_gc(p, t, y_observed) -> LossValue:
    """Gradient calibration on unobserved labels only.

    (1/n) sum_i sum_{c: y_ic = 0} log(1 - p_ic * t_ic). The per-logit
    gradient on included cells is -t/(1 - p*t) * p*(1-p) / n, which is
    never positive: cells with a high pseudo-label score are pushed toward
    positive predictions instead of being penalized as false negatives.
    """
    p = _clamp(p)
    t = _check_unit(_check_shapes(p, t, "pseudo_labels"))
    y = _check_binary(_check_shapes(p, y_observed, "y_observed"), "y_observed")
    value, grad = _gc_core(p, t, y == 0.0)
    return LossValue(value, grad)


def loss_adagc(p, y, t, lam: float) -> LossValue:
    """Batch-mean BCE plus ``lam`` times the calibration term.

    ``y`` may be soft (post-Mixup); calibration applies exactly where
    y == 0, i.e. to cells with no positive evidence from either Mixup
    source. Both terms are averaged over the batch so ``lam`` transfers
    across batch sizes.
    """
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    p = _clamp(p)
    y = _check_unit(_check_shapes(p, y, "y"), "y")
    t = _check_unit(_check_shapes(p, t, "pseudo_labels"))
    n = p.shape[0]
    bce_value, bce_grad = _bce_terms(p, y)
    gc_value, gc_grad = _gc_core(p, t, y == 0.0)
    return LossValue(bce_value / n + lam * gc_value, bce_grad / n + lam * gc_grad)
