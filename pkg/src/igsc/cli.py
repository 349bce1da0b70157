"""Command-line entry point.

Commands: synth, train, eval, sweep, gradcheck, export-weights. Every
command accepts --config pointing at a JSON file whose keys mirror the
flag names; explicit flags override the file. Exit codes: 0 success,
1 check failure, 2 usage/validation error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation as eval_mod
from . import plots
from . import training as train_mod
from .errors import IgscError, NumericError, UsageError, ValidationError
from .model import ClassifierForm

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

TRAIN_DEFAULTS = {
    "form": "nonlinear",
    "h": 30,
    "h1": 1024,
    "h2": 1024,
    "lr": 1e-5,
    "batch_size": 64,
    "epochs": 100,
    "seed": 0,
    "scoring": "softmax",
    "hidden_act": "tanh",
    "pure_softmax_ce": False,
    "merge_val": False,
    "val_select": False,
    "early_stop_patience": 0,
}

DEFAULTS = {
    "synth": {
        "seen": 20, "unseen": 5, "per_class": 30, "d": 16, "v": 32,
        "noise": 0.01, "seed": 7, "out": None,
    },
    "train": {"data": None, "out": None, "report_dir": None, **TRAIN_DEFAULTS},
    "eval": {
        "model": None, "data": None, "gamma": 0.0, "report_dir": None,
        "trials": 0, **TRAIN_DEFAULTS,
    },
    "sweep": {
        "model": None, "data": None, "gammas": None, "gamma_min": 0.0,
        "gamma_max": None, "gamma_steps": 21, "report_dir": None,
    },
    "gradcheck": {
        "trials": 60, "seed": 1, "eps": 1e-6, "tol": 1e-4,
        "forms": "both", "modes": "both",
    },
    "export-weights": {"model": None, "data": None, "out": None},
}

REQUIRED = {
    "synth": ("out",),
    "train": ("data", "out"),
    "eval": ("data",),
    "sweep": ("model", "data"),
    "gradcheck": (),
    "export-weights": ("model", "data", "out"),
}


def _add_train_options(sub):
    sub.add_argument("--form", choices=["linear", "nonlinear"])
    sub.add_argument("--h", type=int, help="hidden width of the nonlinear generated classifier")
    sub.add_argument("--h1", type=int, help="first hidden width of the generator network")
    sub.add_argument("--h2", type=int, help="second hidden width of the generator network")
    sub.add_argument("--lr", type=float)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--scoring", choices=["softmax", "sigmoid"])
    sub.add_argument("--hidden-act", choices=["tanh", "relu"])
    sub.add_argument("--pure-softmax-ce", action=argparse.BooleanOptionalAction, default=None)
    sub.add_argument("--merge-val", action=argparse.BooleanOptionalAction, default=None)
    sub.add_argument("--val-select", action=argparse.BooleanOptionalAction, default=None)
    sub.add_argument("--early-stop-patience", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igsc",
        description="Train and evaluate image-guided semantic classifiers on embedding datasets.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate a seeded synthetic dataset")
    synth.add_argument("--seen", type=int)
    synth.add_argument("--unseen", type=int)
    synth.add_argument("--per-class", type=int)
    synth.add_argument("--d", type=int, help="prototype dimension")
    synth.add_argument("--v", type=int, help="feature dimension")
    synth.add_argument("--noise", type=float)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out", help="output dataset directory")

    tr = commands.add_parser("train", help="train a model on a dataset directory")
    tr.add_argument("--data", help="dataset directory")
    tr.add_argument("--out", help="checkpoint output path")
    tr.add_argument("--report-dir", help="write history CSV and loss figure here")
    _add_train_options(tr)

    ev = commands.add_parser("eval", help="evaluate a checkpoint (or train fresh models with --trials)")
    ev.add_argument("--model", help="checkpoint path")
    ev.add_argument("--data", help="dataset directory")
    ev.add_argument("--gamma", type=float, help="calibration factor for seen-class scores")
    ev.add_argument("--trials", type=int, help="retrain with k seeds and average the reports")
    ev.add_argument("--report-dir", help="write report JSON, CSV, and confusion figures here")
    _add_train_options(ev)

    sw = commands.add_parser("sweep", help="sweep the calibration factor")
    sw.add_argument("--model", help="checkpoint path")
    sw.add_argument("--data", help="dataset directory")
    sw.add_argument("--gammas", help="comma-separated gamma grid, e.g. 0,0.1,0.2")
    sw.add_argument("--gamma-min", type=float)
    sw.add_argument("--gamma-max", type=float)
    sw.add_argument("--gamma-steps", type=int)
    sw.add_argument("--report-dir", help="write sweep JSON, CSV, and curve figure here")

    gc = commands.add_parser("gradcheck", help="validate analytic gradients against finite differences")
    gc.add_argument("--trials", type=int)
    gc.add_argument("--seed", type=int)
    gc.add_argument("--eps", type=float)
    gc.add_argument("--tol", type=float)
    gc.add_argument("--forms", choices=["both", "linear", "nonlinear"])
    gc.add_argument("--modes", choices=["both", "softmax", "sigmoid"])

    ex = commands.add_parser("export-weights", help="write one packed classifier per test image")
    ex.add_argument("--model", help="checkpoint path")
    ex.add_argument("--data", help="dataset directory")
    ex.add_argument("--out", help="output directory")

    for name, sub in commands.choices.items():
        sub.add_argument("--config", help="JSON config file; explicit flags override it")
        sub.set_defaults(command=name)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags, rejecting unknown keys."""
    defaults = DEFAULTS[args.command]
    merged = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        merged.update(loaded)
    for key in defaults:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            merged[key] = value
    missing = [k for k in REQUIRED[args.command] if merged.get(k) is None]
    if missing:
        raise UsageError(f"missing required option(s) for {args.command}: " + ", ".join(f"--{m}" for m in missing))
    return merged


def _train_config(opts: dict, prototype_dim: int) -> train_mod.TrainConfig:
    form = ClassifierForm(opts["form"], d=prototype_dim, h=opts["h"] if opts["form"] == "nonlinear" else 0)
    return train_mod.TrainConfig(
        form=form,
        h1=opts["h1"],
        h2=opts["h2"],
        learning_rate=opts["lr"],
        batch_size=opts["batch_size"],
        epochs=opts["epochs"],
        seed=opts["seed"],
        scoring_mode=opts["scoring"],
        hidden_activation=opts["hidden_act"],
        pure_softmax_ce=opts["pure_softmax_ce"],
        merge_val=opts["merge_val"],
        val_select=opts["val_select"],
        early_stop_patience=opts["early_stop_patience"],
    )


def _check_model_dataset(params, dataset):
    if params.input_dim != dataset.feature_dim:
        raise ValidationError(
            f"checkpoint expects {params.input_dim}-dim features, dataset has {dataset.feature_dim}"
        )
    if params.form.d != dataset.prototype_dim:
        raise ValidationError(
            f"checkpoint expects {params.form.d}-dim prototypes, dataset has {dataset.prototype_dim}"
        )


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_synth(opts: dict) -> int:
    spec = data_mod.SyntheticSpec(
        seen_count=opts["seen"],
        unseen_count=opts["unseen"],
        d=opts["d"],
        v=opts["v"],
        samples_per_class=opts["per_class"],
        noise_sigma=opts["noise"],
        seed=opts["seed"],
    )
    dataset = data_mod.make_synthetic(spec)
    data_mod.save_dataset(opts["out"], dataset)
    print(
        f"wrote dataset to {opts['out']}: {dataset.n_samples} samples, "
        f"{dataset.n_classes} classes ({len(dataset.seen_classes)} seen / "
        f"{len(dataset.unseen_classes)} unseen), v={dataset.feature_dim}, d={dataset.prototype_dim}"
    )
    return EXIT_OK


def cmd_train(opts: dict) -> int:
    dataset = data_mod.load_dataset(opts["data"])
    config = _train_config(opts, dataset.prototype_dim)
    params, history = train_mod.train(dataset, config)

    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    train_mod.save_checkpoint(out, params)
    history_path = out.with_name(out.name + ".history.json")
    history_path.write_text(json.dumps(history.as_dict(), indent=2) + "\n", encoding="utf-8")

    if opts.get("report_dir"):
        report_dir = Path(opts["report_dir"])
        report_dir.mkdir(parents=True, exist_ok=True)
        with open(report_dir / "history.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "val_acc", "seconds"])
            for i, e in enumerate(history.epochs):
                writer.writerow([i + 1, repr(e.loss), "" if e.val_acc is None else repr(e.val_acc), f"{e.seconds:.4f}"])
        plots.save_history_curve(history, report_dir / "training_loss.png")

    print(f"saved checkpoint to {out} (history: {history_path})")
    print(f"final loss: {history.final_loss:.6g}")
    return EXIT_OK


def _write_eval_report(report, dataset, report_dir: Path) -> None:
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "report.json").write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    seen = set(int(c) for c in dataset.seen_classes)
    counts = report.confusion.sum(axis=1)
    with open(report_dir / "per_class.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "group", "test_count", "accuracy"])
        for cls in sorted(report.per_class_acc):
            writer.writerow([
                cls,
                "seen" if cls in seen else "unseen",
                int(counts[cls]),
                repr(report.per_class_acc[cls]),
            ])
    plots.save_confusion_figures(report, dataset.seen_classes, dataset.unseen_classes, report_dir)


def cmd_eval(opts: dict) -> int:
    dataset = data_mod.load_dataset(opts["data"])
    trials = opts["trials"] or 0

    if trials > 0:
        reports = []
        for k in range(trials):
            trial_config = _train_config({**opts, "seed": opts["seed"] + k}, dataset.prototype_dim)
            params, _ = train_mod.train(dataset, trial_config)
            reports.append(eval_mod.evaluate_gzsl(params, dataset, opts["gamma"]))
        arr = {key: np.array([getattr(r, key) for r in reports]) for key in ("acc_s", "acc_u", "H")}
        payload = {
            "gamma": opts["gamma"],
            "trials": trials,
            "mean": {k: float(v.mean()) for k, v in arr.items()},
            "std": {k: float(v.std()) for k, v in arr.items()},
            "reports": [r.as_dict() for r in reports],
        }
        _print_json(payload)
        if opts.get("report_dir"):
            report_dir = Path(opts["report_dir"])
            report_dir.mkdir(parents=True, exist_ok=True)
            (report_dir / "trials.json").write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        return EXIT_OK

    if not opts.get("model"):
        raise UsageError("eval needs --model (or --trials k to train fresh models)")
    params = train_mod.load_checkpoint(opts["model"])
    _check_model_dataset(params, dataset)
    report = eval_mod.evaluate_gzsl(params, dataset, opts["gamma"])
    _print_json(report.as_dict())
    if opts.get("report_dir"):
        _write_eval_report(report, dataset, Path(opts["report_dir"]))
    return EXIT_OK


def _gamma_grid(opts: dict) -> list[float]:
    if opts.get("gammas"):
        try:
            return [float(tok) for tok in str(opts["gammas"]).split(",") if tok.strip()]
        except ValueError as exc:
            raise UsageError(f"--gammas must be a comma-separated list of numbers: {exc}") from exc
    if opts.get("gamma_max") is None:
        raise UsageError("sweep needs --gammas or --gamma-max")
    steps = opts["gamma_steps"]
    if steps < 2:
        raise UsageError(f"--gamma-steps must be >= 2, got {steps}")
    return list(np.linspace(opts["gamma_min"], opts["gamma_max"], steps))


def cmd_sweep(opts: dict) -> int:
    dataset = data_mod.load_dataset(opts["data"])
    params = train_mod.load_checkpoint(opts["model"])
    _check_model_dataset(params, dataset)
    curve = eval_mod.calibration_sweep(params, dataset, _gamma_grid(opts))
    _print_json(curve.as_dict())
    if opts.get("report_dir"):
        report_dir = Path(opts["report_dir"])
        report_dir.mkdir(parents=True, exist_ok=True)
        (report_dir / "sweep.json").write_text(
            json.dumps(curve.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        with open(report_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gamma", "acc_s", "acc_u", "H"])
            for g, report in curve.points:
                writer.writerow([repr(g), repr(report.acc_s), repr(report.acc_u), repr(report.H)])
        plots.save_sweep_curve(curve, report_dir / "sweep_curve.png")
        best = next(r for g, r in curve.points if g == curve.best_gamma)
        plots.save_confusion_figures(best, dataset.seen_classes, dataset.unseen_classes,
                                     report_dir, prefix="confusion_best_gamma")
    return EXIT_OK


def cmd_gradcheck(opts: dict) -> int:
    forms = ("linear", "nonlinear") if opts["forms"] == "both" else (opts["forms"],)
    modes = ("softmax", "sigmoid") if opts["modes"] == "both" else (opts["modes"],)
    result = train_mod.gradcheck_suite(
        trials=opts["trials"], seed=opts["seed"], eps=opts["eps"], tol=opts["tol"],
        forms=forms, modes=modes,
    )
    print(f"ran {result.checks} gradient checks (forms: {', '.join(forms)}; modes: {', '.join(modes)})")
    print(f"worst relative error: {result.worst_rel_err:.3e} in tensor {result.worst_tensor} ({result.worst_case})")
    if result.failures:
        for failure in result.failures:
            print(f"FAIL {failure}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"all checks within tolerance {opts['tol']:g}")
    return EXIT_OK


def cmd_export_weights(opts: dict) -> int:
    dataset = data_mod.load_dataset(opts["data"])
    params = train_mod.load_checkpoint(opts["model"])
    _check_model_dataset(params, dataset)
    idx = np.concatenate([dataset.splits.test_seen_idx, dataset.splits.test_unseen_idx])
    if idx.size == 0:
        raise UsageError("dataset has no test samples to export")
    from .model import hypernet_forward

    packed = hypernet_forward(dataset.features[idx], params)["F"]
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    data_mod.write_matrix(out / "weights.f32bin", packed)
    data_mod.write_labels(out / "labels.u32bin", dataset.labels[idx])
    print(f"wrote {packed.shape[0]} packed classifiers ({packed.shape[1]} values each) to {out}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "export-weights": cmd_export_weights,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = resolve_options(args)
        return COMMANDS[args.command](opts)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IgscError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
