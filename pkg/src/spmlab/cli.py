"""Command-line entry point: dataset generation, corruption, experiments.

Subcommands: ``gen`` (synthetic dataset to CSV), ``corrupt`` (apply a
single-positive noise regime), ``train`` (run one experiment and write its
artifacts), ``eval`` (re-score a checkpoint), ``grid`` (one experiment per
hyperparameter value). Errors leave a machine-readable JSON object on
stderr and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import (
    MultiLabelDataset,
    SyntheticSpec,
    generate_synthetic,
    load_split_csv,
    read_spec_json,
    write_spec_json,
    write_split_csv,
)
from .metrics import compute_metric_report
from .net import Mlp, make_rng, sigmoid
from .noise import compute_flip_rates, simulate_dominant_spml, simulate_random_spml
from .training import (
    TrainConfig,
    Trainer,
    load_checkpoint,
    save_checkpoint,
)

__all__ = ["ExperimentSpec", "run_experiment", "main"]

REGIMES = ("random", "dominant", "none")
# stream tag mixed into the data seed so corruption draws are independent
# of generation draws but still reproducible from one seed
NOISE_STREAM = 9157


@dataclass
class ExperimentSpec:
    train_config: TrainConfig
    outdir: str
    regime: str = "random"
    synthetic: SyntheticSpec | None = None
    data_dir: str | None = None
    noise_seed: int | None = None
    emit_curves: bool = True

    def validate(self) -> None:
        self.train_config.validate()
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if (self.synthetic is None) == (self.data_dir is None):
            raise ValueError("exactly one of synthetic spec or data_dir is required")
        if self.regime == "none" and self.train_config.method not in ("gt", "iun"):
            raise ValueError(
                "regime 'none' keeps full labels and is only valid with "
                "methods 'gt' or 'iun'"
            )


def _load_splits(spec: ExperimentSpec) -> dict:
    if spec.synthetic is not None:
        return generate_synthetic(spec.synthetic)
    datadir = Path(spec.data_dir)
    return {name: load_split_csv(datadir, name) for name in ("train", "val", "test")}


def _resolve_noise_seed(spec: ExperimentSpec) -> int:
    if spec.noise_seed is not None:
        return spec.noise_seed
    if spec.synthetic is not None:
        return spec.synthetic.seed
    return 0


def apply_regime(ds: MultiLabelDataset, regime: str,
                 rng: np.random.Generator) -> MultiLabelDataset:
    """Attach observed labels for one split under a noise regime."""
    if regime == "none":
        return ds.with_observed(ds.y_true.copy())
    if regime == "random":
        return ds.with_observed(simulate_random_spml(ds.y_true, rng))
    if regime == "dominant":
        if ds.extents is None:
            raise ValueError("dominant regime requires extent scores")
        return ds.with_observed(simulate_dominant_spml(ds.y_true, ds.extents))
    raise ValueError(f"unknown regime {regime!r}")


def _json_dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_curves(path, logs) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "stage", "loss", "noisy_val_map",
             "noisy_val_map_student", "clean_val_map"]
        )
        for log in logs:
            writer.writerow([
                log.epoch,
                log.stage,
                repr(log.train_loss),
                repr(log.noisy_val_map),
                repr(log.noisy_val_map_student),
                "" if log.clean_val_map is None else repr(log.clean_val_map),
            ])


def read_curves(path) -> list:
    """Re-ingest a curves.csv written by ``run_experiment``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({
            "epoch": int(row["epoch"]),
            "stage": row["stage"],
            "loss": float(row["loss"]),
            "noisy_val_map": float(row["noisy_val_map"]),
            "noisy_val_map_student": float(row["noisy_val_map_student"]),
            "clean_val_map": None if row["clean_val_map"] == ""
            else float(row["clean_val_map"]),
        })
    return out


def read_config_json(path) -> ExperimentSpec:
    """Rebuild an experiment spec from a written config.json."""
    with open(path) as fh:
        payload = json.load(fh)
    synthetic = payload["synthetic"]
    if synthetic is not None:
        synthetic["split_ratio"] = tuple(synthetic["split_ratio"])
        synthetic = SyntheticSpec(**synthetic)
    return ExperimentSpec(
        train_config=TrainConfig(**payload["train_config"]),
        outdir=str(Path(path).parent),
        regime=payload["regime"],
        synthetic=synthetic,
        data_dir=payload["data_dir"],
        noise_seed=payload["noise_seed"],
    )


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run one experiment and write its artifacts; returns their paths."""
    spec.validate()
    outdir = Path(spec.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    splits = _load_splits(spec)
    noise_rng = make_rng([_resolve_noise_seed(spec), NOISE_STREAM])
    train_ds = apply_regime(splits["train"], spec.regime, noise_rng)
    val_ds = apply_regime(splits["val"], spec.regime, noise_rng)
    test_ds = splits["test"]

    flips = compute_flip_rates(train_ds.y_true, train_ds.y_observed)
    flips.to_csv(outdir / "fliprates.csv")

    trainer = Trainer(spec.train_config, train_ds, val_ds)
    trainer.run()
    final_model = trainer.teacher if spec.train_config.method == "adagc" else trainer.model
    probs = sigmoid(final_model.forward(test_ds.features))
    report = compute_metric_report(probs, test_ds.y_true, spec.train_config.threshold)

    resolved = asdict(spec.train_config)
    resolved["w_neg"] = trainer.w_neg
    resolved["k_expected"] = trainer.k_expected
    config_payload = {
        "train_config": resolved,
        "regime": spec.regime,
        "noise_seed": _resolve_noise_seed(spec),
        "synthetic": None if spec.synthetic is None else asdict(spec.synthetic),
        "data_dir": spec.data_dir,
        "trigger_epoch": trainer.detector.trigger_epoch,
    }
    _json_dump(config_payload, outdir / "config.json")
    _json_dump(report.to_json_dict(), outdir / "metrics.json")
    if spec.emit_curves:
        _write_curves(outdir / "curves.csv", trainer.logs)
    save_checkpoint(trainer.checkpoint(), outdir / "checkpoint.json")

    paths = {
        "config": outdir / "config.json",
        "metrics": outdir / "metrics.json",
        "fliprates": outdir / "fliprates.csv",
        "checkpoint": outdir / "checkpoint.json",
    }
    if spec.emit_curves:
        paths["curves"] = outdir / "curves.csv"
    return paths


def _add_synthetic_flags(parser) -> None:
    d = SyntheticSpec()
    parser.add_argument("--n-samples", type=int, default=d.n_samples)
    parser.add_argument("--n-classes", type=int, default=d.n_classes)
    parser.add_argument("--n-features", type=int, default=d.n_features)
    parser.add_argument("--separation", type=float, default=d.separation)
    parser.add_argument("--mean-positives", type=float, default=d.mean_positives)
    parser.add_argument("--extent-concentration", type=float,
                        default=d.extent_concentration)
    parser.add_argument("--data-seed", type=int, default=d.seed)


def _synthetic_from_args(args) -> SyntheticSpec:
    return SyntheticSpec(
        n_samples=args.n_samples,
        n_classes=args.n_classes,
        n_features=args.n_features,
        separation=args.separation,
        mean_positives=args.mean_positives,
        extent_concentration=args.extent_concentration,
        seed=args.data_seed,
    )


def _train_config_flags(parser) -> None:
    d = TrainConfig()
    parser.add_argument("--method", default=d.method)
    parser.add_argument("--lam", type=float, default=d.lam)
    parser.add_argument("--beta-t", type=float, default=d.beta_t)
    parser.add_argument("--beta-s", type=float, default=d.beta_s)
    parser.add_argument("--gamma", type=float, default=d.gamma)
    parser.add_argument("--mixup-alpha", type=float, default=d.mixup_alpha)
    parser.add_argument("--patience", type=int, default=d.patience)
    parser.add_argument("--eps-smooth", type=float, default=d.eps_smooth)
    parser.add_argument("--w-neg", type=float, default=None)
    parser.add_argument("--k-expected", type=float, default=None)
    parser.add_argument("--epr-weight", type=float, default=d.epr_weight)
    parser.add_argument("--epochs", type=int, default=d.epochs)
    parser.add_argument("--batch-size", type=int, default=d.batch_size)
    parser.add_argument("--learning-rate", type=float, default=d.learning_rate)
    parser.add_argument("--seed", type=int, default=d.seed)
    parser.add_argument("--threshold", type=float, default=d.threshold)
    parser.add_argument("--hidden", type=int, default=d.hidden)
    parser.add_argument("--raw-student-pseudo", action="store_true")
    parser.add_argument("--log-clean-val", action="store_true")


def _config_from_args(args) -> TrainConfig:
    return TrainConfig(
        method=args.method,
        lam=args.lam,
        beta_t=args.beta_t,
        beta_s=args.beta_s,
        gamma=args.gamma,
        mixup_alpha=args.mixup_alpha,
        patience=args.patience,
        eps_smooth=args.eps_smooth,
        w_neg=args.w_neg,
        k_expected=args.k_expected,
        epr_weight=args.epr_weight,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        threshold=args.threshold,
        hidden=args.hidden,
        raw_student_pseudo=args.raw_student_pseudo,
        log_clean_val=args.log_clean_val,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spmlab",
        description="single-positive multi-label learning lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset as CSV splits")
    _add_synthetic_flags(p_gen)
    p_gen.add_argument("--outdir", required=True)

    p_cor = sub.add_parser("corrupt", help="apply a noise regime to a dataset")
    p_cor.add_argument("--data-dir", required=True)
    p_cor.add_argument("--regime", choices=["random", "dominant"], required=True)
    p_cor.add_argument("--noise-seed", type=int, default=None)
    p_cor.add_argument("--outdir", default=None,
                       help="defaults to the dataset directory")

    p_train = sub.add_parser("train", help="run one experiment")
    _add_synthetic_flags(p_train)
    _train_config_flags(p_train)
    p_train.add_argument("--data-dir", default=None)
    p_train.add_argument("--regime", choices=list(REGIMES), default="random")
    p_train.add_argument("--noise-seed", type=int, default=None)
    p_train.add_argument("--outdir", required=True)
    p_train.add_argument("--no-curves", action="store_true")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data-dir", required=True)
    p_eval.add_argument("--split", choices=["train", "val", "test"], default="test")
    p_eval.add_argument("--threshold", type=float, default=0.5)
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--use-student", action="store_true",
                        help="score the student parameters instead of the teacher")

    p_grid = sub.add_parser("grid", help="run a grid of experiments")
    _add_synthetic_flags(p_grid)
    _train_config_flags(p_grid)
    p_grid.add_argument("--data-dir", default=None)
    p_grid.add_argument("--regime", choices=list(REGIMES), default="random")
    p_grid.add_argument("--noise-seed", type=int, default=None)
    p_grid.add_argument("--outdir", required=True)
    p_grid.add_argument("--no-curves", action="store_true")
    p_grid.add_argument("--grid", action="append", required=True,
                        metavar="FIELD=V1,V2,...",
                        help="repeatable; cartesian product over fields")
    p_grid.add_argument("--jobs", type=int, default=1)

    return parser


def _cmd_gen(args) -> int:
    spec = _synthetic_from_args(args)
    splits = generate_synthetic(spec)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, ds in splits.items():
        write_split_csv(ds, outdir, name)
    write_spec_json(spec, outdir / "spec.json")
    print(outdir)
    return 0


def _cmd_corrupt(args) -> int:
    datadir = Path(args.data_dir)
    outdir = Path(args.outdir) if args.outdir else datadir
    outdir.mkdir(parents=True, exist_ok=True)
    noise_seed = args.noise_seed
    if noise_seed is None:
        spec_path = datadir / "spec.json"
        noise_seed = read_spec_json(spec_path).seed if spec_path.exists() else 0
    rng = make_rng([noise_seed, NOISE_STREAM])
    flips = None
    for name in ("train", "val"):
        ds = load_split_csv(datadir, name)
        ds = apply_regime(ds, args.regime, rng)
        write_split_csv(ds, outdir, name)
        if name == "train":
            flips = compute_flip_rates(ds.y_true, ds.y_observed)
    flips.to_csv(outdir / "fliprates.csv")
    if outdir != datadir:
        # keep the clean test split alongside the corrupted training data
        write_split_csv(load_split_csv(datadir, "test"), outdir, "test")
    print(outdir)
    return 0


def _spec_from_train_args(args) -> ExperimentSpec:
    synthetic = None if args.data_dir else _synthetic_from_args(args)
    return ExperimentSpec(
        train_config=_config_from_args(args),
        outdir=args.outdir,
        regime=args.regime,
        synthetic=synthetic,
        data_dir=args.data_dir,
        noise_seed=args.noise_seed,
        emit_curves=not args.no_curves,
    )


def _cmd_train(args) -> int:
    run_experiment(_spec_from_train_args(args))
    print(args.outdir)
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    params_key = "student_params" if args.use_student else "teacher_params"
    model = Mlp(tuple(ckpt["layer_sizes"]), np.array(ckpt[params_key]))
    ds = load_split_csv(args.data_dir, args.split)
    probs = sigmoid(model.forward(ds.features))
    report = compute_metric_report(probs, ds.y_true, args.threshold)
    payload = report.to_json_dict()
    if args.out:
        _json_dump(payload, args.out)
    print(json.dumps(payload, sort_keys=True))
    return 0


def _parse_grid(items) -> list:
    axes = []
    valid = {f.name: f for f in fields(TrainConfig)}
    for item in items:
        if "=" not in item:
            raise ValueError(f"grid entry {item!r} is not FIELD=V1,V2,...")
        key, values = item.split("=", 1)
        key = key.replace("-", "_")
        if key not in valid:
            raise ValueError(f"unknown config field {key!r} in grid")
        axes.append((key, values.split(",")))
    return axes


def _grid_cells(axes) -> list:
    cells = [{}]
    for key, values in axes:
        cells = [dict(cell, **{key: v}) for cell in cells for v in values]
    return cells


def _coerce_field(name: str, raw: str):
    hints = {f.name: f.type for f in fields(TrainConfig)}
    hint = hints[name]
    if "bool" in hint:
        return raw.lower() in ("1", "true", "yes")
    if "int" in hint and "float" not in hint:
        return int(raw)
    if "float" in hint:
        return float(raw)
    return raw


def _cmd_grid(args) -> int:
    base = _spec_from_train_args(args)
    axes = _parse_grid(args.grid)
    specs = []
    for cell in _grid_cells(axes):
        spec = copy.deepcopy(base)
        for key, raw in cell.items():
            setattr(spec.train_config, key, _coerce_field(key, raw))
        subdir = "_".join(f"{k}={v}" for k, v in cell.items())
        spec.outdir = str(Path(args.outdir) / subdir)
        specs.append(spec)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(run_experiment, specs))
    else:
        for spec in specs:
            run_experiment(spec)
    for spec in specs:
        print(spec.outdir)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "corrupt": _cmd_corrupt,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "grid": _cmd_grid,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
