"""Two-stage training pipeline and baseline single-stage modes.

The calibrated method warms up on the assume-negative loss while a
teacher EMA and per-sample prediction EMA run alongside. A patience
detector watches the teacher's mAP on the noisy (single-positive)
validation labels; once it plateaus, training switches to the calibrated
objective on Mixup batches with fused pseudo-labels. Baseline modes are
single-stage runs of the corresponding loss.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import losses
from .data import MultiLabelDataset
from .ema import (
    ema_update_predictions,
    ema_update_weights,
    init_dual_ema,
    make_pseudo_labels,
)
from .metrics import MetricReport, compute_metric_report, mean_average_precision
from .net import Mlp, make_rng, sigmoid

__all__ = [
    "METHODS",
    "TrainConfig",
    "DetectorState",
    "detect_early_learning",
    "EpochLog",
    "mixup_batch",
    "Trainer",
    "TrainResult",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]

METHODS = ("adagc", "an", "an_ls", "wan", "epr", "iun", "gt")

CHECKPOINT_FORMAT = "spmlab-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    method: str = "adagc"
    lam: float = 3.0
    beta_t: float = 0.999
    beta_s: float = 0.8
    gamma: float = 0.5
    mixup_alpha: float = 1.0
    patience: int = 3
    eps_smooth: float = 0.1
    w_neg: float | None = None        # None: resolved to 1/(C-1)
    k_expected: float | None = None   # None: resolved to mean true cardinality
    epr_weight: float = 1.0
    epochs: int = 70
    batch_size: int = 32
    learning_rate: float = 0.1
    seed: int = 0
    threshold: float = 0.5
    hidden: int = 32                  # 0: linear model
    raw_student_pseudo: bool = False  # ablation: bypass the prediction EMA
    log_clean_val: bool = False       # diagnostic only, never used for decisions

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        for name in ("beta_t", "beta_s", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.method == "adagc" and not self.mixup_alpha > 0:
            raise ValueError("mixup_alpha must be positive for the calibrated method")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not 0.0 <= self.eps_smooth < 0.5:
            raise ValueError("eps_smooth must be in [0, 0.5)")
        if self.w_neg is not None and not 0.0 < self.w_neg <= 1.0:
            raise ValueError("w_neg must be in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if self.hidden < 0:
            raise ValueError("hidden must be non-negative")


@dataclass
class DetectorState:
    """Patience bookkeeping over the teacher's noisy-validation mAP."""

    best_map: float = float("-inf")
    best_epoch: int = -1
    since_improvement: int = 0
    triggered: bool = False
    trigger_epoch: int | None = None
    n_seen: int = 0


def detect_early_learning(state: DetectorState, noisy_val_map: float,
                          patience: int) -> DetectorState:
    """Advance the detector by one epoch of teacher noisy-validation mAP.

    Only a strict improvement resets the patience counter; the trigger
    fires the first time the counter reaches ``patience``.
    """
    if not 0.0 <= noisy_val_map <= 1.0:
        raise ValueError(f"mAP must be in [0, 1], got {noisy_val_map}")
    epoch = state.n_seen
    if noisy_val_map > state.best_map:
        state.best_map = noisy_val_map
        state.best_epoch = epoch
        state.since_improvement = 0
    else:
        state.since_improvement += 1
        if not state.triggered and state.since_improvement >= patience:
            state.triggered = True
            state.trigger_epoch = epoch
    state.n_seen = epoch + 1
    return state


@dataclass
class EpochLog:
    epoch: int
    stage: str                        # "warmup" or "gc"
    train_loss: float
    noisy_val_map: float              # teacher model vs single-positive labels
    noisy_val_map_student: float
    clean_val_map: float | None
    wall_time: float


def mixup_batch(x, y, t, rng: np.random.Generator, alpha: float):
    """Convex pairing inside a batch: returns (x_mix, y_mix, t_mix, phi).

    Each sample draws a uniform partner from the batch and its own
    phi ~ Beta(alpha, alpha) shared across features, labels, and
    pseudo-labels. Cells where both sources agree pass through untouched,
    so mixed values never leave the convex hull of their endpoints.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    arrays = [np.asarray(a, dtype=np.float64) for a in (x, y, t)]
    n = arrays[0].shape[0]
    if n == 0:
        raise ValueError("cannot mix an empty batch")
    if any(a.shape[0] != n for a in arrays):
        raise ValueError("x, y, t must share the batch dimension")
    partner = rng.integers(0, n, size=n)
    phi = rng.beta(alpha, alpha, size=n)
    mixed = []
    for a in arrays:
        w = phi.reshape((n,) + (1,) * (a.ndim - 1))
        m = w * a + (1.0 - w) * a[partner]
        same = a == a[partner]
        mixed.append(np.where(same, a, m))
    return mixed[0], mixed[1], mixed[2], phi


class Trainer:
    """Owns all mutable training state; one instance drives one run."""

    def __init__(self, config: TrainConfig, train_ds: MultiLabelDataset,
                 val_ds: MultiLabelDataset):
        config.validate()
        self.config = config
        self.train_ds = train_ds
        self.val_ds = val_ds
        self._check_datasets()

        self.rng = make_rng(config.seed)
        sizes = (train_ds.n_features, config.hidden, train_ds.n_classes)
        if config.hidden == 0:
            sizes = (train_ds.n_features, train_ds.n_classes)
        self.model = Mlp.init(sizes, self.rng)
        self.ema = init_dual_ema(
            self.model.params, train_ds.n_samples, train_ds.n_classes,
            beta_t=config.beta_t, beta_s=config.beta_s, gamma=config.gamma,
        )
        self.detector = DetectorState()
        self.logs: list[EpochLog] = []
        self.epoch = 0
        self.stage = "warmup"

        self.w_neg = config.w_neg
        if self.w_neg is None:
            self.w_neg = 1.0 / max(train_ds.n_classes - 1, 1)
        self.k_expected = config.k_expected
        if self.k_expected is None:
            self.k_expected = float(train_ds.y_true.sum(axis=1).mean())
        if config.method == "iun":
            self._true_neg_mask = (train_ds.y_true == 0.0).astype(np.float64)

    def _check_datasets(self) -> None:
        train_ds, val_ds = self.train_ds, self.val_ds
        if val_ds.n_features != train_ds.n_features:
            raise ValueError(
                f"validation features have {val_ds.n_features} columns, "
                f"training has {train_ds.n_features}"
            )
        if val_ds.n_classes != train_ds.n_classes:
            raise ValueError("train and validation class counts differ")
        for name, ds in (("training", train_ds), ("validation", val_ds)):
            if ds.y_observed is None:
                raise ValueError(f"{name} set has no observed labels")
        if self.config.method not in ("gt", "iun"):
            sums = train_ds.y_observed.sum(axis=1)
            if not np.all(sums == 1.0):
                raise ValueError(
                    f"method {self.config.method!r} requires single-positive "
                    f"observed training labels"
                )

    @property
    def teacher(self) -> Mlp:
        return self.model.with_params(self.ema.teacher_params)

    def _baseline_loss(self, p, idx) -> losses.LossValue:
        cfg = self.config
        y_obs = self.train_ds.y_observed[idx]
        if cfg.method in ("an", "adagc"):
            return losses.loss_an(p, y_obs)
        if cfg.method == "an_ls":
            return losses.loss_an_ls(p, y_obs, cfg.eps_smooth)
        if cfg.method == "wan":
            return losses.loss_wan(p, y_obs, self.w_neg)
        if cfg.method == "epr":
            return losses.loss_epr(p, y_obs, self.k_expected, cfg.epr_weight)
        if cfg.method == "iun":
            return losses.loss_iun(p, y_obs, self._true_neg_mask[idx])
        if cfg.method == "gt":
            return losses.loss_an(p, self.train_ds.y_true[idx])
        raise AssertionError(cfg.method)

    def _warmup_iteration(self, idx) -> float:
        xb = self.train_ds.features[idx]
        p = sigmoid(self.model.forward(xb))
        if self.config.method == "adagc":
            ema_update_predictions(self.ema, idx, p)
        lv = self._baseline_loss(p, idx)
        nb = idx.size
        grad = self.model.backward(xb, lv.dlogits / nb)
        self.model = self.model.sgd_step(grad, self.config.learning_rate)
        ema_update_weights(self.ema, self.model.params)
        return lv.value / nb

    def _gc_iteration(self, idx) -> float:
        cfg = self.config
        xb = self.train_ds.features[idx]
        yb = self.train_ds.y_observed[idx]
        # pseudo-labels come from the un-mixed batch: two forward-only
        # passes feed the prediction EMA and the teacher-student fusion
        p_student = sigmoid(self.model.forward(xb))
        ema_update_predictions(self.ema, idx, p_student)
        p_teacher = sigmoid(self.teacher.forward(xb))
        t = make_pseudo_labels(
            self.ema, p_teacher, idx,
            student_probs=p_student if cfg.raw_student_pseudo else None,
        )
        x_mix, y_mix, t_mix, _ = mixup_batch(xb, yb, t, self.rng, cfg.mixup_alpha)
        p_mix = sigmoid(self.model.forward(x_mix))
        lv = losses.loss_adagc(p_mix, y_mix, t_mix, cfg.lam)
        grad = self.model.backward(x_mix, lv.dlogits)
        self.model = self.model.sgd_step(grad, cfg.learning_rate)
        ema_update_weights(self.ema, self.model.params)
        return lv.value

    def _val_map(self, model: Mlp, labels) -> float:
        probs = sigmoid(model.forward(self.val_ds.features))
        value, _ = mean_average_precision(probs, labels)
        return value

    def run_epoch(self) -> EpochLog:
        t0 = time.perf_counter()
        cfg = self.config
        n = self.train_ds.n_samples
        order = self.rng.permutation(n)
        stage = self.stage
        loss_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if stage == "gc":
                loss_sum += self._gc_iteration(idx)
            else:
                loss_sum += self._warmup_iteration(idx)
            n_batches += 1

        noisy_map = self._val_map(self.teacher, self.val_ds.y_observed)
        noisy_map_student = self._val_map(self.model, self.val_ds.y_observed)
        clean_map = None
        if cfg.log_clean_val:
            clean_map = self._val_map(self.teacher, self.val_ds.y_true)

        detect_early_learning(self.detector, noisy_map, cfg.patience)
        if cfg.method == "adagc" and self.detector.triggered:
            self.stage = "gc"

        log = EpochLog(
            epoch=self.epoch,
            stage=stage,
            train_loss=loss_sum / n_batches,
            noisy_val_map=noisy_map,
            noisy_val_map_student=noisy_map_student,
            clean_val_map=clean_map,
            wall_time=time.perf_counter() - t0,
        )
        self.logs.append(log)
        self.epoch += 1
        return log

    def run(self, max_epochs: int | None = None) -> None:
        target = self.config.epochs
        if max_epochs is not None:
            target = min(target, self.epoch + max_epochs)
        while self.epoch < target:
            self.run_epoch()

    def checkpoint(self) -> dict:
        """Everything needed to resume the run bit-identically."""
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "epoch": self.epoch,
            "stage": self.stage,
            "layer_sizes": list(self.model.layer_sizes),
            "student_params": self.model.params.tolist(),
            "teacher_params": self.ema.teacher_params.tolist(),
            "smoothed_preds": self.ema.smoothed_preds.tolist(),
            "visited": self.ema.visited.astype(int).tolist(),
            "detector": asdict(self.detector),
            "rng_state": self.rng.bit_generator.state,
            "logs": [asdict(log) for log in self.logs],
        }

    @classmethod
    def from_checkpoint(cls, ckpt: dict, train_ds: MultiLabelDataset,
                        val_ds: MultiLabelDataset) -> "Trainer":
        if ckpt.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a trainer checkpoint")
        if ckpt.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
        config = TrainConfig(**ckpt["config"])
        trainer = cls(config, train_ds, val_ds)
        trainer.model = Mlp(tuple(ckpt["layer_sizes"]), np.array(ckpt["student_params"]))
        trainer.ema.teacher_params = np.array(ckpt["teacher_params"], dtype=np.float64)
        trainer.ema.smoothed_preds = np.array(ckpt["smoothed_preds"], dtype=np.float64)
        trainer.ema.visited = np.array(ckpt["visited"], dtype=bool)
        trainer.detector = DetectorState(**ckpt["detector"])
        trainer.rng.bit_generator.state = ckpt["rng_state"]
        trainer.epoch = ckpt["epoch"]
        trainer.stage = ckpt["stage"]
        trainer.logs = [EpochLog(**d) for d in ckpt["logs"]]
        return trainer


@dataclass
class TrainResult:
    config: TrainConfig
    student: Mlp
    teacher: Mlp
    logs: list
    detector: DetectorState
    report: MetricReport | None = None

    @property
    def final_model(self) -> Mlp:
        """Teacher for the calibrated method, student otherwise."""
        return self.teacher if self.config.method == "adagc" else self.student


def train(config: TrainConfig, train_ds: MultiLabelDataset,
          val_ds: MultiLabelDataset,
          test_ds: MultiLabelDataset | None = None) -> TrainResult:
    """Run a full training and optionally evaluate on a clean test set."""
    trainer = Trainer(config, train_ds, val_ds)
    trainer.run()
    result = TrainResult(
        config=config,
        student=trainer.model,
        teacher=trainer.teacher,
        logs=trainer.logs,
        detector=trainer.detector,
    )
    if test_ds is not None:
        result.report = evaluate(result.final_model, test_ds, config.threshold)
    return result


def evaluate(model: Mlp, dataset: MultiLabelDataset,
             threshold: float = 0.5) -> MetricReport:
    """Full metric report of a model against the dataset's true labels."""
    probs = sigmoid(model.forward(dataset.features))
    return compute_metric_report(probs, dataset.y_true, threshold)


def save_checkpoint(ckpt: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(ckpt, fh)
        fh.write("\n")


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
