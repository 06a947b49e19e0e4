"""Multi-label evaluation metrics and the noisy-metric oracle.

Ranking metrics use a fixed deterministic tie rule: scores are ranked in
descending order, ties broken by ascending index (sample index for
average precision, class index for coverage). Ranking-loss ties count as
ordering errors.

The noisy-metric side relates evaluation against corrupted single-positive
labels to evaluation against the clean ground truth: per-class counts obey
an exact identity in the flip rate beta and the recovered-flip fraction
alpha, and Monte Carlo checks confirm that random flips bias mAP downward
while dominant (instance-dependent) flips bias it upward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .net import as_matrix

__all__ = [
    "MetricReport",
    "average_precision",
    "mean_average_precision",
    "coverage",
    "ranking_loss",
    "thresholded_metrics",
    "compute_metric_report",
    "NoisyMetricResult",
    "noisy_metric_transform",
    "estimate_proposition_bounds",
    "MonteCarloConfig",
    "MonteCarloReport",
    "monte_carlo_proposition_check",
]


def _descending_order(scores, tiebreak):
    """Indices sorting scores descending, ties broken by ascending tiebreak."""
    return np.lexsort((tiebreak, -scores))


def average_precision(scores, labels) -> float:
    """Non-interpolated AP: mean precision at the ranks of the positives."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.size} vs {y.size}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("class has no positive labels and is not evaluable")
    order = _descending_order(s, np.arange(s.size))
    hits = y[order]
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, s.size + 1)
    prec_at_pos = (cum_hits / ranks)[hits == 1.0]
    return float(prec_at_pos.sum() / n_pos)


def mean_average_precision(scores, labels):
    """Macro mAP over evaluable classes; returns (map, per-class AP vector).

    Classes without positives get AP = NaN and are excluded from the mean.
    """
    s = as_matrix(scores, "scores")
    y = as_matrix(labels, "labels")
    if s.shape != y.shape:
        raise ValueError(f"scores shape {s.shape} does not match labels {y.shape}")
    per_class = np.full(s.shape[1], np.nan)
    for c in range(s.shape[1]):
        if y[:, c].sum() > 0:
            per_class[c] = average_precision(s[:, c], y[:, c])
    evaluable = ~np.isnan(per_class)
    if not evaluable.any():
        raise ValueError("no class has positive labels; mAP undefined")
    return float(per_class[evaluable].mean()), per_class


def coverage(scores, labels) -> float:
    """Mean depth of the worst-ranked true label, minus one."""
    s = as_matrix(scores, "scores")
    y = as_matrix(labels, "labels")
    if s.shape != y.shape:
        raise ValueError(f"scores shape {s.shape} does not match labels {y.shape}")
    n, n_classes = s.shape
    class_ids = np.arange(n_classes)
    total = 0.0
    for i in range(n):
        pos = y[i] == 1.0
        if not pos.any():
            raise ValueError(f"row {i} has no positive label")
        order = _descending_order(s[i], class_ids)
        ranks = np.empty(n_classes, dtype=np.intp)
        ranks[order] = np.arange(1, n_classes + 1)
        total += ranks[pos].max() - 1
    return float(total / n)


def ranking_loss(scores, labels) -> float:
    """Average fraction of (positive, negative) pairs ordered wrongly.

    A tie counts as an error. Rows lacking a positive or a negative label
    are skipped; see ``compute_metric_report`` for the skipped count.
    """
    value, _ = _ranking_loss_counted(scores, labels)
    return value


def _ranking_loss_counted(scores, labels):
    s = as_matrix(scores, "scores")
    y = as_matrix(labels, "labels")
    if s.shape != y.shape:
        raise ValueError(f"scores shape {s.shape} does not match labels {y.shape}")
    total = 0.0
    valid = 0
    skipped = 0
    for i in range(s.shape[0]):
        pos = y[i] == 1.0
        neg = ~pos
        if not pos.any() or not neg.any():
            skipped += 1
            continue
        sp = s[i, pos]
        sn = s[i, neg]
        violations = (sp[:, None] <= sn[None, :]).sum()
        total += violations / (sp.size * sn.size)
        valid += 1
    if valid == 0:
        raise ValueError("no row has both a positive and a negative label")
    return float(total / valid), skipped


def thresholded_metrics(probs, labels, threshold: float = 0.5):
    """Cell accuracy and macro precision/recall/F1 at a decision threshold.

    Returns (oa, mf1, mprecision, mrecall, per-class precision, recall, f1).
    Empty denominators yield 0 rather than NaN.
    """
    p = as_matrix(probs, "probs")
    y = as_matrix(labels, "labels")
    if p.shape != y.shape:
        raise ValueError(f"probs shape {p.shape} does not match labels {y.shape}")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    pred = (p >= threshold).astype(np.float64)
    oa = float((pred == y).mean())   # normalized by n * C
    tp = (pred * y).sum(axis=0)
    pp = pred.sum(axis=0)
    pos = y.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pp > 0, tp / pp, 0.0)
        recall = np.where(pos > 0, tp / pos, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return (
        oa,
        float(f1.mean()),
        float(precision.mean()),
        float(recall.mean()),
        precision,
        recall,
        f1,
    )


@dataclass
class MetricReport:
    """Full evaluation summary: ranking metrics plus thresholded rates."""

    map: float
    coverage: float
    rankloss: float
    oa: float
    mf1: float
    mprecision: float
    mrecall: float
    threshold: float
    ap_per_class: np.ndarray
    precision_per_class: np.ndarray
    recall_per_class: np.ndarray
    f1_per_class: np.ndarray
    n_classes_evaluated: int
    rankloss_skipped_rows: int

    def to_json_dict(self) -> dict:
        def listify(a):
            return [None if np.isnan(v) else float(v) for v in a]

        return {
            "map": self.map,
            "coverage": self.coverage,
            "rankloss": self.rankloss,
            "oa": self.oa,
            "mf1": self.mf1,
            "mprecision": self.mprecision,
            "mrecall": self.mrecall,
            "threshold": self.threshold,
            "ap_per_class": listify(self.ap_per_class),
            "precision_per_class": listify(self.precision_per_class),
            "recall_per_class": listify(self.recall_per_class),
            "f1_per_class": listify(self.f1_per_class),
            "n_classes_evaluated": self.n_classes_evaluated,
            "rankloss_skipped_rows": self.rankloss_skipped_rows,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricReport":
        def arr(key):
            return np.array(
                [np.nan if v is None else float(v) for v in d[key]], dtype=np.float64
            )

        return cls(
            map=d["map"],
            coverage=d["coverage"],
            rankloss=d["rankloss"],
            oa=d["oa"],
            mf1=d["mf1"],
            mprecision=d["mprecision"],
            mrecall=d["mrecall"],
            threshold=d["threshold"],
            ap_per_class=arr("ap_per_class"),
            precision_per_class=arr("precision_per_class"),
            recall_per_class=arr("recall_per_class"),
            f1_per_class=arr("f1_per_class"),
            n_classes_evaluated=d["n_classes_evaluated"],
            rankloss_skipped_rows=d["rankloss_skipped_rows"],
        )


def compute_metric_report(probs, labels, threshold: float = 0.5) -> MetricReport:
    """Evaluate probabilities against binary labels on every metric."""
    p = as_matrix(probs, "probs")
    y = as_matrix(labels, "labels")
    map_value, ap_per_class = mean_average_precision(p, y)
    cov = coverage(p, y)
    rl, rl_skipped = _ranking_loss_counted(p, y)
    oa, mf1, mprec, mrec, prec_c, rec_c, f1_c = thresholded_metrics(p, y, threshold)
    return MetricReport(
        map=map_value,
        coverage=cov,
        rankloss=rl,
        oa=oa,
        mf1=mf1,
        mprecision=mprec,
        mrecall=mrec,
        threshold=threshold,
        ap_per_class=ap_per_class,
        precision_per_class=prec_c,
        recall_per_class=rec_c,
        f1_per_class=f1_c,
        n_classes_evaluated=int((~np.isnan(ap_per_class)).sum()),
        rankloss_skipped_rows=rl_skipped,
    )


@dataclass
class NoisyMetricResult:
    """Noisy-vs-clean recall/precision for one class, both derivations.

    ``noisy_*`` comes straight from the counts, ``noisy_*_parametric``
    from the (alpha, beta) form; both are computed in exact rational
    arithmetic, so whenever neither is degenerate they agree exactly.
    """

    clean_recall: float
    clean_precision: float
    noisy_recall: float
    noisy_precision: float
    noisy_recall_parametric: float
    noisy_precision_parametric: float
    alpha: float
    beta: float
    degenerate: tuple = field(default_factory=tuple)


def noisy_metric_transform(p, tp, pp, f, pf):
    """Per-class noisy metrics from counts (P, TP, PP, F, PF).

    P: true positives in the clean labels; TP: correctly predicted clean
    positives; PP: predicted positives; F: positives flipped to negative
    by the corruption; PF: flipped positives the model still predicts
    positive. Counts must satisfy PF <= F <= P and PF <= TP.
    """
    arrays = [np.asarray(a) for a in (p, tp, pp, f, pf)]
    if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
        raise ValueError("count vectors must be 1-D and of equal length")
    results = []
    for c, (p_c, tp_c, pp_c, f_c, pf_c) in enumerate(zip(*arrays)):
        p_c, tp_c, pp_c, f_c, pf_c = (int(v) for v in (p_c, tp_c, pp_c, f_c, pf_c))
        if min(p_c, tp_c, pp_c, f_c, pf_c) < 0:
            raise ValueError(f"class {c}: counts must be non-negative")
        if not (pf_c <= f_c <= p_c):
            raise ValueError(f"class {c}: requires PF <= F <= P")
        if pf_c > tp_c:
            raise ValueError(f"class {c}: requires PF <= TP")
        if tp_c > p_c or tp_c > pp_c:
            raise ValueError(f"class {c}: requires TP <= P and TP <= PP")
        flags = []
        nan = float("nan")

        clean_rec = Fraction(tp_c, p_c) if p_c > 0 else None
        clean_prec = Fraction(tp_c, pp_c) if pp_c > 0 else None
        if clean_rec is None:
            flags.append("no_true_positives")
        if clean_prec is None:
            flags.append("no_predicted_positives")

        beta = Fraction(f_c, p_c) if p_c > 0 else None
        alpha = Fraction(pf_c, f_c) if f_c > 0 else None

        noisy_rec = Fraction(tp_c - pf_c, p_c - f_c) if p_c - f_c > 0 else None
        if noisy_rec is None and p_c > 0:
            flags.append("all_positives_flipped")
        noisy_prec = Fraction(tp_c - pf_c, pp_c) if pp_c > 0 else None

        if f_c == 0:
            # beta = 0: the corruption is empty and noisy equals clean
            rec_param, prec_param = clean_rec, clean_prec
        elif beta is None:
            rec_param = prec_param = None
        else:
            rec_param = (
                (clean_rec - alpha * beta) / (1 - beta) if beta != 1 else None
            )
            if clean_prec is None:
                prec_param = None
            elif clean_rec is None or clean_rec == 0:
                flags.append("parametric_precision_undefined")
                prec_param = noisy_prec
            else:
                prec_param = clean_prec * (1 - alpha * beta / clean_rec)

        def as_float(x):
            return nan if x is None else float(x)

        results.append(
            NoisyMetricResult(
                clean_recall=as_float(clean_rec),
                clean_precision=as_float(clean_prec),
                noisy_recall=as_float(noisy_rec),
                noisy_precision=as_float(noisy_prec),
                noisy_recall_parametric=as_float(rec_param),
                noisy_precision_parametric=as_float(prec_param),
                alpha=as_float(alpha),
                beta=as_float(beta),
                degenerate=tuple(flags),
            )
        )
    return results


def estimate_proposition_bounds(clean_ap, beta, regime: str) -> float:
    """Closed-form expected noisy mAP under a flip regime.

    random:   (1 - mean(beta)) * mAP* - Cov(beta, AP*)
    dominant: mean(1/(1-beta)) * mAP* + Cov(1/(1-beta), AP*)

    Covariances are population covariances across classes.
    """
    ap = np.asarray(clean_ap, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    if ap.shape != b.shape or ap.ndim != 1:
        raise ValueError("clean_ap and beta must be 1-D vectors of equal length")
    if np.any(b <= 0.0) or np.any(b >= 1.0):
        raise ValueError("beta entries must lie in (0, 1)")
    def pop_cov(u, v):
        return float(np.mean(u * v) - np.mean(u) * np.mean(v))

    if regime == "random":
        return float((1.0 - b.mean()) * ap.mean() - pop_cov(b, ap))
    if regime == "dominant":
        w = 1.0 / (1.0 - b)
        return float(w.mean() * ap.mean() + pop_cov(w, ap))
    raise ValueError(f"unknown regime {regime!r}")


@dataclass
class MonteCarloConfig:
    """Synthetic score/label generator for the proposition checks."""

    n_samples: int = 2000
    n_classes: int = 19
    mean_positives: float = 5.0
    beta_low: float = 0.45
    beta_high: float = 0.8
    margin_low: float = 1.0
    margin_high: float = 2.5
    dominant_sharpness: float = 6.0
    seed: int = 0


@dataclass
class MonteCarloReport:
    clean_map: float
    predicted_map: float
    measured: np.ndarray
    measured_mean: float
    frac_below_clean: float
    frac_above_clean: float


def monte_carlo_proposition_check(config: MonteCarloConfig, regime: str,
                                  trials: int) -> MonteCarloReport:
    """Measure E[noisy mAP] under repeated flips of a fixed score matrix.

    Random regime: each true positive flips independently with its class
    rate beta_c. Dominant regime: per class, round(beta_c * P_c) positives
    flip, drawn without replacement with weights concentrated on the
    lowest-scored positives (the model "knows" the dominant class, so
    flipped positives are the ones it ranks poorly).
    """
    if trials < 100:
        raise ValueError(f"need at least 100 trials, got {trials}")
    if regime not in ("random", "dominant"):
        raise ValueError(f"unknown regime {regime!r}")
    rng = np.random.default_rng(config.seed)
    n, n_classes = config.n_samples, config.n_classes

    base = rng.uniform(0.1, 1.0, n_classes)
    prevalence = np.clip(base * (config.mean_positives / base.sum()), 0.02, 0.9)
    y = (rng.random((n, n_classes)) < prevalence).astype(np.float64)
    empty = y.sum(axis=1) == 0
    if empty.any():
        forced = rng.choice(n_classes, size=int(empty.sum()), p=prevalence / prevalence.sum())
        y[np.flatnonzero(empty), forced] = 1.0

    margins = rng.uniform(config.margin_low, config.margin_high, n_classes)
    scores = y * margins + rng.standard_normal((n, n_classes))
    betas = rng.uniform(config.beta_low, config.beta_high, n_classes)

    clean_map, clean_ap = mean_average_precision(scores, y)
    predicted = estimate_proposition_bounds(clean_ap, betas, regime)

    pos_index = [np.flatnonzero(y[:, c] == 1.0) for c in range(n_classes)]
    measured = np.empty(trials)
    for trial in range(trials):
        y_noisy = y.copy()
        if regime == "random":
            flip = (rng.random((n, n_classes)) < betas) & (y == 1.0)
            y_noisy[flip] = 0.0
        else:
            for c in range(n_classes):
                pos = pos_index[c]
                n_flip = int(round(betas[c] * pos.size))
                if n_flip == 0:
                    continue
                # Gumbel top-k = weighted sampling without replacement,
                # weights exp(-sharpness * score): low scores flip first
                keys = -config.dominant_sharpness * scores[pos, c]
                keys = keys - np.log(-np.log(rng.random(pos.size)))
                y_noisy[pos[np.argsort(keys)[-n_flip:]], c] = 0.0
        measured[trial], _ = mean_average_precision(scores, y_noisy)

    return MonteCarloReport(
        clean_map=clean_map,
        predicted_map=predicted,
        measured=measured,
        measured_mean=float(measured.mean()),
        frac_below_clean=float((measured < clean_map).mean()),
        frac_above_clean=float((measured > clean_map).mean()),
    )
