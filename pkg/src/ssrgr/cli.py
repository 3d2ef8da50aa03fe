"""Command-line entry point: ``ssrgr {train,predict,eval,ablate}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import DataError, InvalidConfigError, SsrgrError
from .kernel import class_scores_kernel, fit_kernel
from .linear import class_scores, fit, predict_transductive, preprocess
from .persist import RunConfig, load_config, load_model, save_model, write_atomic

log = logging.getLogger("ssrgr")

ABLATION_NAMES = {"000": "all-zero", "100": "global-only", "111": "all-nonzero"}


class UsageError(InvalidConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- accuracy ------------------------------------------------------------------

def accuracy_metrics(pred, truth, class_count=None):
    """Overall and per-class accuracy plus a confusion matrix (0-based ids)."""
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise DataError(f"{pred.size} predictions vs {truth.size} ground-truth labels")
    c = class_count or (int(max(pred.max(initial=-1), truth.max(initial=-1))) + 1)
    confusion = np.zeros((c, c), dtype=int)
    np.add.at(confusion, (truth, pred), 1)
    per_class = {}
    for k in range(c):
        members = truth == k
        per_class[str(k + 1)] = float(np.mean(pred[members] == k)) if members.any() else None
    return {
        "accuracy": float(np.mean(pred == truth)) if truth.size else None,
        "per_class_accuracy": per_class,
        "confusion": confusion.tolist(),
        "count": int(truth.size),
    }


# -- training ------------------------------------------------------------------

def load_training_data(cfg):
    if not cfg.dataset:
        raise InvalidConfigError("[run] dataset is required")
    ds = data_mod.load_dataset(cfg.dataset, cfg.format)
    if ds.labels is None:
        raise DataError(f"{cfg.dataset}: training data needs a label row")
    return ds


def training_labels(ds, cfg):
    """Labels the estimator sees plus the indices scored for accuracy."""
    if np.any(ds.labels < 0):
        return ds.labels.copy(), None
    labeled, unlabeled = data_mod.split(ds, cfg.split)
    return data_mod.mask_labels(ds.labels, labeled), unlabeled


def run_fit(cfg, ds, labels):
    if cfg.mode == "kernel":
        return fit_kernel(ds.features, labels, cfg.hyper, cfg.kernel)
    return fit(ds.features, labels, cfg.hyper)


def train(cfg):
    """Fit one configuration; returns ``(model, report)``."""
    ds = load_training_data(cfg)
    labels, scored = training_labels(ds, cfg)
    t0 = time.perf_counter()
    model = run_fit(cfg, ds, labels)
    elapsed = time.perf_counter() - t0
    pred = model.transductive()
    report = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "num_samples": ds.n,
        "num_labeled": int(np.sum(labels >= 0)),
        "outer_iterations": len(model.trace),
        "objective_trace": list(model.trace),
        "wall_clock_seconds": elapsed,
        "config": cfg.echo(),
    }
    if scored is not None:
        metrics = accuracy_metrics(pred[scored], ds.labels[scored], ds.class_count)
        report["accuracy"] = metrics["accuracy"]
        report["per_class_accuracy"] = metrics["per_class_accuracy"]
    else:
        report["accuracy"] = None
        report["per_class_accuracy"] = None
    return model, report


def predictions_text(pred, scores):
    c = scores.shape[0]
    lines = ["index,class," + ",".join(f"score_{k + 1}" for k in range(c))]
    for i, (p, col) in enumerate(zip(pred, scores.T)):
        lines.append(f"{i},{int(p) + 1}," + ",".join(repr(float(v)) for v in col))
    return "\n".join(lines) + "\n"


def read_predictions(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("index,class"):
        raise DataError(f"{path}: not a predictions file")
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            out.append(int(line.split(",")[1]) - 1)
        except (IndexError, ValueError):
            raise DataError(f"{path}:{ln}: malformed row") from None
    return np.array(out, dtype=int)


def read_labels(path, fmt="text"):
    """Class ids (0-based) from a predictions file or a labeled dataset."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(11)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    if head.startswith(b"index,class"):
        return read_predictions(path)
    ds = data_mod.load_dataset(path, fmt)
    if ds.labels is None:
        raise DataError(f"{path}: dataset has no label row")
    return ds.labels


def cmd_train(args):
    cfg = load_config(args.config, mode=args.mode, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out=args.out)
    model, report = train(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.bin", model, cfg.hyper, class_count=int(model.labels_pred.shape[0]))
    write_atomic(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_atomic(out / "predictions.csv",
                 predictions_text(model.transductive(), model.labels_pred))
    acc = report["accuracy"]
    print(f"trained {cfg.mode} model: {report['outer_iterations']} iterations, "
          f"accuracy {'n/a' if acc is None else f'{acc:.4f}'} -> {out}")
    return 0


def _training_columns(model, hyper):
    if model.features is None:
        return model.gram
    return model.features


def predict_dataset(model, hyper, X):
    """Scores (c x m) and class ids for the columns of X.

    Columns identical to a training column reuse its transductive label
    vector; others are coded against the learned dictionary.
    """
    is_kernel = hasattr(model, "coeffs")
    ref = _training_columns(model, hyper)
    c = model.labels_pred.shape[0]
    if X.shape[1] == 0:
        return np.zeros((c, 0)), np.zeros(0, dtype=int)
    if X.shape[0] != ref.shape[0]:
        what = "kernel rows" if model.features is None else "features"
        raise DataError(f"dataset has {X.shape[0]} {what} per sample, model expects {ref.shape[0]}")
    Xp = X if model.features is None else preprocess(X, hyper)
    scores = np.zeros((c, X.shape[1]))
    lookup = {ref[:, j].tobytes(): j for j in range(ref.shape[1])}
    fresh = []
    for i in range(X.shape[1]):
        j = lookup.get(Xp[:, i].tobytes())
        if j is None:
            fresh.append(i)
        else:
            scores[:, i] = model.labels_pred[:, j]
    if fresh:
        cols = X[:, fresh]
        if is_kernel:
            rows = cols if model.features is None else None
            scores[:, fresh] = class_scores_kernel(model, cols, hyper, rows=rows)
        else:
            scores[:, fresh] = class_scores(model, cols, hyper)
    return scores, predict_transductive(scores)


def cmd_predict(args):
    model, hyper, _ = load_model(args.model)
    ds = data_mod.load_dataset(args.dataset, args.format)
    scores, pred = predict_dataset(model, hyper, ds.features)
    text = predictions_text(pred, scores)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args):
    pred = read_labels(args.predictions, args.format)
    truth = read_labels(args.truth, args.format)
    if pred.shape != truth.shape:
        raise DataError(f"{pred.size} predictions vs {truth.size} ground-truth labels")
    keep = truth >= 0
    metrics = accuracy_metrics(pred[keep], truth[keep])
    text = json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    if args.out:
        write_atomic(args.out, text)
    sys.stdout.write(text)
    return 0


def parse_patterns(spec):
    patterns = [p.strip() for p in spec.split(",") if p.strip()]
    for p in patterns:
        if len(p) != 3 or set(p) - {"0", "1"}:
            raise UsageError(f"ablation pattern {p!r} must be three 0/1 digits (beta1 beta2 beta3)")
    if not patterns:
        raise UsageError("no ablation patterns given")
    return patterns


def ablate(cfg, patterns, seeds):
    """Accuracy/runtime rows, one per pattern, averaged over ``seeds``."""
    ds = load_training_data(cfg)
    hp = cfg.hyper
    rows = []
    for pat in patterns:
        betas = [b if on == "1" else 0.0 for on, b in zip(pat, (hp.beta1, hp.beta2, hp.beta3))]
        accs, secs = [], []
        for seed in seeds:
            run = cfg.with_seed(seed)
            run = replace(run, hyper=run.hyper.with_betas(*betas))
            labels, scored = training_labels(ds, run)
            t0 = time.perf_counter()
            model = run_fit(run, ds, labels)
            secs.append(time.perf_counter() - t0)
            if scored is not None:
                pred = model.transductive()
                accs.append(float(np.mean(pred[scored] == ds.labels[scored])))
        rows.append({"pattern": pat, "name": ABLATION_NAMES.get(pat, pat),
                     "beta1": betas[0], "beta2": betas[1], "beta3": betas[2],
                     "accuracy": float(np.mean(accs)) if accs else None,
                     "accuracies": accs, "seconds": float(np.sum(secs))})
    return rows


def ablation_table(rows):
    lines = ["pattern\tname\tbeta1\tbeta2\tbeta3\taccuracy\tseconds"]
    for r in rows:
        acc = "nan" if r["accuracy"] is None else f"{r['accuracy']:.6f}"
        lines.append(f"{r['pattern']}\t{r['name']}\t{r['beta1']:g}\t{r['beta2']:g}\t"
                     f"{r['beta3']:g}\t{acc}\t{r['seconds']:.3f}")
    return "\n".join(lines) + "\n"


def cmd_ablate(args):
    cfg = load_config(args.config, mode=args.mode, seed=args.seed)
    patterns = parse_patterns(args.patterns)
    seeds = [cfg.seed + i for i in range(args.repeats)]
    rows = ablate(cfg, patterns, seeds)
    text = ablation_table(rows)
    if args.out:
        out = Path(args.out)
        write_atomic(out, text)
        write_atomic(out.with_suffix(".json"), json.dumps(rows, indent=2) + "\n")
    sys.stdout.write(text)
    return 0


def build_parser():
    p = _Parser(prog="ssrgr", description="Semi-supervised sparse representation "
                "with graph regularization")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="fit a model and write model.bin, report.json")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--mode", choices=("linear", "kernel"))
    t.add_argument("--out", help="output directory (overrides [run] out)")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="classify the samples of a dataset file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--dataset", required=True)
    pr.add_argument("--format", choices=("text", "binary"), default="text")
    pr.add_argument("--out", help="predictions file (default: stdout)")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="accuracy of predictions against ground truth")
    e.add_argument("--predictions", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--format", choices=("text", "binary"), default="text")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="accuracy per beta pattern")
    a.add_argument("--config", required=True)
    a.add_argument("--patterns", default="000,100,111")
    a.add_argument("--repeats", type=int, default=1, help="number of consecutive seeds")
    a.add_argument("--seed", type=int)
    a.add_argument("--mode", choices=("linear", "kernel"))
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SsrgrError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
