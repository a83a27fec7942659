"""Command-line entry point: build, evaluate, sweep, abstain-curve and oracle.

Exit codes: 0 success, 2 validation error, 3 greedy failure, 4 property violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .abstain import abstention_tradeoff_curve, fit_accuracy_model, format_threshold
from .cascade import (CascadeFailure, ConfidentModelSet, EnsembleGenerator, MinRelativeAccuracy,
                      UnionGenerator, cascade_from_dict, cascade_to_dict, evaluate_cascade,
                      greedy_cascade)
from .cost import CostGraphError, cost_function_from_manifest
from .data import (LogFormatError, Metric, UnknownModelError, file_sha256, load_manifest,
                   load_prediction_log, metric_values)
from .oracle import run_property_suites

EXIT_OK, EXIT_INVALID, EXIT_FAILURE, EXIT_VIOLATION = 0, 2, 3, 4
DEFAULT_ALPHA_GRID = tuple(round(1 - i / 100, 12) for i in range(6))


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    train_log: str | None = None
    test_log: str | None = None
    manifest: str | None = None
    cascade: str | None = None
    alpha: float = 1.0
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    metric: Metric = Metric.TOP1
    reference: str | None = None
    accuracy_models: list[str] = field(default_factory=lambda: ["raw:logit_gap"])
    generator: str = "confident"
    cost: str = "linear"
    overhead: float = 0.0
    model: str | None = None
    out: str | None = None
    seed: int = 0
    trials: int = 1000
    allow_train_eval: bool = False

    def validate(self):
        for a in (self.alpha,) + tuple(self.alpha_grid):
            if not 0 < a <= 1:
                raise ConfigError(f"alpha must lie in (0, 1], got {a}")
        needs = {"build": ("train_log", "manifest", "reference", "out"),
                 "evaluate": ("test_log", "manifest", "cascade"),
                 "sweep": ("train_log", "test_log", "manifest", "reference"),
                 "abstain-curve": ("train_log", "model"),
                 "oracle": ()}[self.command]
        for name in needs:
            if getattr(self, name) is None:
                raise ConfigError(f"--{name.replace('_', '-')} is required for {self.command}")
        if self.trials < 0:
            raise ConfigError("--trials must be non-negative")
        return self


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(a) for a in text.split(",") if a.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha grid {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greedycascade", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--train-log")
        p.add_argument("--test-log")
        p.add_argument("--manifest")
        p.add_argument("--metric", default="top1", choices=[m.value for m in Metric])
        p.add_argument("--reference")
        p.add_argument("--accuracy-model", action="append", dest="accuracy_models",
                       help="raw:<feature> | logistic | isotonic:<feature> (repeatable)")
        p.add_argument("--generator", default="confident", choices=["confident", "ensemble"])
        p.add_argument("--cost", default="linear", choices=["linear", "graph"])
        p.add_argument("--overhead", type=float, default=0.0,
                       help="per-component combination cost of ensemble stages")
        p.add_argument("--out")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--allow-train-eval", action="store_true")

    p = sub.add_parser("build", help="fit accuracy models and build a cascade")
    common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p = sub.add_parser("evaluate", help="evaluate a cascade on a held-out log")
    common(p)
    p.add_argument("--cascade")
    p = sub.add_parser("sweep", help="build and evaluate over a grid of alpha values")
    common(p)
    p.add_argument("--alpha-grid", type=_parse_grid, default=DEFAULT_ALPHA_GRID)
    p = sub.add_parser("abstain-curve", help="accuracy vs abstention rate for one model")
    common(p)
    p.add_argument("--model")
    p = sub.add_parser("oracle", help="run the randomized property suites")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    kw = {k: v for k, v in vars(ns).items() if v is not None}
    kw["metric"] = Metric(kw.get("metric", "top1"))
    if not kw.get("accuracy_models"):
        kw.pop("accuracy_models", None)
    return RunConfig(**kw).validate()


# -- shared pieces ---------------------------------------------------------------

def _load_pool(cfg: RunConfig):
    train = load_prediction_log(cfg.train_log)
    manifest = load_manifest(cfg.manifest)
    missing = [m for m in manifest.model_ids if m not in train.model_ids]
    if missing:
        raise ConfigError(f"manifest models missing from the train log: {missing}")
    if cfg.reference not in manifest.model_ids:
        raise ConfigError(f"reference model {cfg.reference!r} is not in the manifest")
    return train, manifest


def _build(cfg: RunConfig, train, manifest, alpha: float):
    cf = cost_function_from_manifest(manifest, cfg.cost)
    ac = MinRelativeAccuracy(alpha, cfg.reference, cfg.metric)
    pool = [(m, fit_accuracy_model(descriptor, train, m, cfg.metric))
            for m in manifest.model_ids for descriptor in cfg.accuracy_models]
    generator = ConfidentModelSet(pool, ac)
    if cfg.generator == "ensemble":
        generator = UnionGenerator(generator, EnsembleGenerator(
            manifest.model_ids, ac, cfg.accuracy_models[0], cfg.metric, cfg.overhead))
    return greedy_cascade(train.example_ids, ac, cf, generator, train), ac, cf


def _fmt(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    if isinstance(x, float) and math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return f"{float(x):.6f}"


def _table(header, rows) -> str:
    cells = [list(header)] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells) + "\n"


def _stage_table(trace, train, metric):
    rows = []
    for i, s in enumerate(trace.stages, 1):
        idx = train.index(s.answered)
        pred, _ = s.model.predict(train)
        acc = float(metric_values(metric, pred[idx], train.labels[idx]).mean())
        rows.append({"stage": i, "model_id": s.model.model_id, "provenance": s.model.provenance,
                     "threshold": format_threshold(getattr(s.model, "threshold", math.nan)),
                     "n_remaining": s.n_remaining, "answered": len(s.answered),
                     "cost": float(s.cost), "ratio": float(s.ratio), "accuracy": acc})
    return rows


STAGE_HEADER = ("stage", "model", "threshold", "remaining", "answered", "cost", "ratio",
                "accuracy")


def _stage_text(rows, total_cost, n) -> str:
    body = [(r["stage"], r["model_id"], r["threshold"], r["n_remaining"], r["answered"],
             _fmt(r["cost"]), _fmt(r["ratio"]), _fmt(r["accuracy"])) for r in rows]
    return _table(STAGE_HEADER, body) + f"T = {_fmt(float(total_cost))}  mean cost = " \
        f"{_fmt(float(total_cost) / n if n else math.nan)}\n"


def _report_rows(report):
    rows = [(r.stage, r.model_id, _fmt(float(r.cost)), r.threshold, _fmt(r.fraction),
             _fmt(r.accuracy)) for r in report.rows]
    rows.append(("all", "", _fmt(report.mean_cost), "", _fmt(1.0 - report.unanswered),
                 _fmt(report.accuracy)))
    return rows


REPORT_HEADER = ("stage", "model", "cost", "threshold", "fraction_classified", "accuracy")


def _write_csv(header, rows, path=None, stream=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
    else:
        (stream or sys.stdout).write(buf.getvalue())


def _guard_train_eval(cfg: RunConfig, recorded_hash: str | None):
    if cfg.allow_train_eval:
        return
    same_path = cfg.train_log is not None and \
        Path(cfg.train_log).resolve() == Path(cfg.test_log).resolve()
    same_hash = recorded_hash is not None and file_sha256(cfg.test_log) == recorded_hash
    if same_path or same_hash:
        raise ConfigError("the test log is the build log; confidence statistics on seen "
                          "examples are biased (pass --allow-train-eval to override)")


# -- subcommands -----------------------------------------------------------------

def cmd_build(cfg: RunConfig, out=sys.stdout) -> int:
    train, manifest = _load_pool(cfg)
    trace, ac, cf = _build(cfg, train, manifest, cfg.alpha)
    if isinstance(trace, CascadeFailure):
        print(f"greedy cascade failed at stage {trace.stage}: no accurate model answers any of "
              f"the {len(trace.remaining)} remaining examples", file=sys.stderr)
        return EXIT_FAILURE
    rows = _stage_table(trace, train, cfg.metric)
    doc = cascade_to_dict(trace, ac, cfg.cost, {
        "T": float(trace.total_cost), "C_sigma": float(trace.total_stage_cost),
        "n_examples": len(train), "stage_table": rows,
        "train_log_sha256": file_sha256(cfg.train_log)})
    Path(cfg.out).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
                             encoding="utf-8")
    out.write(_stage_text(rows, trace.total_cost, len(train)))
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, out=sys.stdout) -> int:
    doc = json.loads(Path(cfg.cascade).read_text(encoding="utf-8"))
    _guard_train_eval(cfg, doc.get("build_stats", {}).get("train_log_sha256"))
    cascade = cascade_from_dict(doc)
    test = load_prediction_log(cfg.test_log)
    manifest = load_manifest(cfg.manifest)
    cf = cost_function_from_manifest(manifest, doc.get("cost", {}).get("kind", cfg.cost))
    report = evaluate_cascade(cascade, test, cfg.metric, cf)
    rows = _report_rows(report)
    out.write(_table(REPORT_HEADER, rows))
    if cfg.out:
        _write_csv(REPORT_HEADER, rows, cfg.out)
    return EXIT_OK


SWEEP_HEADER = ("alpha", "status", "accuracy", "mean_cost", "stages")


def cmd_sweep(cfg: RunConfig, out=sys.stdout) -> int:
    train, manifest = _load_pool(cfg)
    _guard_train_eval(cfg, file_sha256(cfg.train_log))
    test = load_prediction_log(cfg.test_log)
    rows = []
    for alpha in cfg.alpha_grid:
        trace, _, cf = _build(cfg, train, manifest, alpha)
        if isinstance(trace, CascadeFailure):
            rows.append((repr(alpha), "FAILURE", "", "", ""))
            continue
        report = evaluate_cascade(trace, test, cfg.metric, cf)
        rows.append((repr(alpha), "ok", _fmt(report.accuracy), _fmt(report.mean_cost),
                     len(trace)))
    _write_csv(SWEEP_HEADER, rows, cfg.out, out)
    return EXIT_OK


CURVE_HEADER = ("curve", "abstention_rate", "accuracy")


def cmd_abstain_curve(cfg: RunConfig, out=sys.stdout) -> int:
    train = load_prediction_log(cfg.train_log)
    target = load_prediction_log(cfg.test_log) if cfg.test_log else train
    rows = []
    for descriptor in cfg.accuracy_models:
        model = fit_accuracy_model(descriptor, train, cfg.model, cfg.metric)
        for a, acc in abstention_tradeoff_curve(cfg.model, model, target, cfg.metric):
            rows.append((descriptor, _fmt(a), _fmt(acc)))
    for a, acc in abstention_tradeoff_curve(cfg.model, "oracle", target, cfg.metric):
        rows.append(("oracle", _fmt(a), _fmt(acc)))
    _write_csv(CURVE_HEADER, rows, cfg.out, out)
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out=sys.stdout) -> int:
    if cfg.trials == 0:
        print("warning: 0 trials requested; property suites pass vacuously", file=sys.stderr)
        out.write("no trials run\n")
        return EXIT_OK
    results = run_property_suites(cfg.trials, cfg.seed)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        out.write(f"{status}  {r.name}  ({r.trials} trials)\n")
        for seed, detail in r.violations[:5]:
            out.write(f"      violation at trial seed {seed}: {detail}\n")
    out.write(f"worst greedy/OPT ratio: {results[0].worst:.6f}\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


COMMANDS = {"build": cmd_build, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
            "abstain-curve": cmd_abstain_curve, "oracle": cmd_oracle}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.command](cfg, out)
    except (ConfigError, LogFormatError, UnknownModelError, CostGraphError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
