"""Command-line entry point.

Scenario fields can be overridden with ``--section.key value`` (for example
``--controller.k0 2`` or ``--station.rate 3e8``); outputs go to ``--out`` with
the scenario hash in every file name.
"""

from __future__ import annotations

import argparse
import logging
import operator
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..bottleneck import train_clf
from ..sim.config import ConfigError, Scenario, dump_scenario, parse_field, parse_scenario, set_field_text
from ..sim.engine import run_scenario
from ..tsml.logit import fit_threshold, train_logit
from ..tsml.modelio import KIND_LOGIT, load_model, save_model, to_text
from ..tsml.rbf import train_rbf
from . import corpus as cp
from .evaluate import eval_models, report_csv
from .presets import PRESETS, TSML_RATES, preset
from .summary import summarize
from .sweep import column, summaries_to_csv, sweep

log = logging.getLogger("aggrate")

_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt, "==": operator.eq}
_EXPECT = re.compile(r"^\s*([A-Za-z_][\w]*)\s*(<=|>=|==|<|>)\s*([-+0-9.eE]+)\s*$")


def check_expectations(values: dict, exprs: Sequence[str]) -> list[str]:
    """Evaluate ``name<op>number`` expressions; returns failure messages."""
    failures = []
    for e in exprs or ():
        m = _EXPECT.match(e)
        if not m:
            raise ValueError(f"bad expectation {e!r}; use e.g. 'delay_mean<0.01'")
        name, op, num = m.groups()
        if name not in values:
            raise ValueError(f"unknown metric {name!r} in expectation")
        v = values[name]
        if v is None or not _OPS[op](float(v), float(num)):
            failures.append(f"expected {name} {op} {num}, got {v}")
    return failures


def _scenario(args, overrides: Sequence[tuple[str, str]]) -> Scenario:
    if args.config:
        sc = parse_scenario(Path(args.config).read_text())
    else:
        sc = preset(args.preset)
    for path, raw in overrides:
        sc = set_field_text(sc, path, raw)
    if getattr(args, "duration", None) is not None:
        sc = set_field_text(sc, "duration", str(args.duration))
    if getattr(args, "seed", None) is not None:
        sc = sc.with_seed(args.seed)
    return sc.validate()


def _split_overrides(extra: Sequence[str]) -> list[tuple[str, str]]:
    out = []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(tok, "unrecognised argument")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            raw = next(it, None)
            if raw is None:
                raise ConfigError(key, "missing value")
        out.append((key, raw))
    return out


def _outdir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _finish(failures: list[str]) -> int:
    for f in failures:
        print(f"CHECK FAILED: {f}", file=sys.stderr)
    return 1 if failures else 0


# -- subcommands -------------------------------------------------------------------

def cmd_run(args, overrides) -> int:
    sc = _scenario(args, overrides)
    if args.packets:
        sc = set_field_text(sc, "record_packets", "true")
    out = _outdir(args.out)
    tr = run_scenario(sc)
    s = summarize(tr, args.warmup)
    stem = f"{sc.name}-{sc.digest()}-s{sc.seed}"
    (out / f"{stem}.ini").write_text(dump_scenario(sc))
    (out / f"{stem}.frames.csv").write_text(tr.frames_csv())
    if tr.controller_log:
        (out / f"{stem}.controller.csv").write_text(tr.controller_csv())
    if tr.packets is not None:
        (out / f"{stem}.packets.csv").write_text(tr.packets_csv())
    (out / f"{stem}.summary.csv").write_text(summaries_to_csv([s]))
    row = s.row()
    for k in ("goodput", "goodput_all", "goodput_bound", "delay_mean", "delay_p95", "mean_agg", "jain",
              "drops_ap", "drops_backhaul", "time_to_target", "agg_std"):
        print(f"{k} = {row[k]}")
    fails = check_expectations(row, args.expect)
    if s.goodput_all > s.goodput_bound:
        fails.append(f"goodput {s.goodput_all} exceeds bound {s.goodput_bound}")
    return _finish(fails)


def _parse_trend(spec: str):
    col, _, direction = spec.partition(":")
    if direction not in ("inc", "dec", "nondec", "noninc"):
        raise ValueError("trend must look like column:inc|dec|nondec|noninc")
    return col, direction


def cmd_sweep(args, overrides) -> int:
    sc = _scenario(args, overrides)
    values = [parse_field(sc, args.axis, v) for v in args.values.split(",") if v.strip()] if args.values else []
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    rows = sweep(sc, args.axis, values, seeds, args.warmup, args.workers)
    out = _outdir(args.out)
    path = out / f"{sc.name}-{sc.digest()}-{args.axis}.csv"
    path.write_text(summaries_to_csv(rows))
    print(f"wrote {path} ({len(rows)} rows)")
    fails = []
    for spec in args.trend or ():
        col, direction = _parse_trend(spec)
        med = np.asarray(column(rows, col), dtype=float)
        d = np.diff(med)
        ok = {"inc": (d > 0).all(), "dec": (d < 0).all(), "nondec": (d >= 0).all(),
              "noninc": (d <= 0).all()}[direction]
        print(f"{col} medians: {med.tolist()} -> {direction}: {'ok' if ok else 'FAILED'}")
        if not ok:
            fails.append(f"{col} is not {direction} over {args.axis}")
    return _finish(fails)


def _boundary_traces(args):
    if args.corpus:
        traces = []
        for c in args.corpus:
            traces += cp.read_boundary_csv(c)
        return traces
    rates = [float(r) for r in args.rates.split(",")] if args.rates else list(TSML_RATES)
    return cp.boundary_corpus(rates, args.data_seed, args.data_duration)


def _save(model, path):
    save_model(model, path)
    Path(str(path) + ".json").write_text(to_text(model))
    print(f"wrote {path}")


def cmd_train_logit(args, overrides) -> int:
    traces = _boundary_traces(args)
    if args.baseline:
        X, y, _ = cp.boundary_dataset(traces, 1, False)
        model = fit_threshold(X, y)
        print(f"threshold = {model.threshold}")
    else:
        X, y, _ = cp.boundary_dataset(traces, args.m, not args.no_sigma)
        model = train_logit(X, y, args.m, not args.no_sigma, args.l2, args.seed, args.folds, args.solver,
                            args.lr, args.epochs)
        if model.cv_f1:
            print(f"cv f1 mean = {np.mean(model.cv_f1):.4f} std = {np.std(model.cv_f1):.4f}")
    _save(model, args.out)
    return 0


def cmd_train_rbf(args, overrides) -> int:
    traces = _boundary_traces(args)
    logit = load_model(args.logit, KIND_LOGIT)
    s = cp.slot_dataset(traces, logit, args.n_max, d=args.d)
    model = train_rbf(s.X, s.y, args.gamma, args.lam, args.seed, args.folds, args.d, args.n_max)
    print(f"gamma = {model.gamma} lambda = {model.lam}")
    _save(model, args.out)
    return 0


def cmd_train_clf(args, overrides) -> int:
    if args.corpus:
        data = cp.read_clf_csv(args.corpus)
        if data.X.shape[1] != args.n + 1:
            raise cp.SchemaError(f"corpus rows carry n={data.X.shape[1] - 1}, asked for n={args.n}")
    else:
        data = cp.clf_dataset(cp.clf_corpus(args.data_seed, args.data_duration), args.n, args.p)
    model = train_clf(data.X, data.y, args.n, args.p, args.l2, args.seed, args.folds)
    if model.cv_f1:
        print(f"cv f1 mean = {np.mean(model.cv_f1):.4f} std = {np.std(model.cv_f1):.4f}")
    _save(model, args.out)
    return 0


def cmd_corpus(args, overrides) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "boundary":
        rates = [float(r) for r in args.rates.split(",")] if args.rates else list(TSML_RATES)
        cp.write_boundary_csv(cp.boundary_corpus(rates, args.data_seed, args.data_duration), out)
    else:
        data = cp.clf_dataset(cp.clf_corpus(args.data_seed, args.data_duration), args.n, args.p)
        cp.write_clf_csv(data, out)
    print(f"wrote {out}")
    return 0


def cmd_eval(args, overrides) -> int:
    rows = eval_models(args.model, args.corpus)
    text = report_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    fails = []
    exprs = list(args.expect or ())
    for e in exprs:
        if not _EXPECT.match(e):
            raise ValueError(f"bad expectation {e!r}; use e.g. 'f1>=0.9'")
    for r in rows:
        if np.isnan(r.load):
            mine = [e for e in exprs if _EXPECT.match(e).group(1) == r.metric]
            fails += [f"{r.model} on {r.corpus}: {f}" for f in check_expectations({r.metric: r.value}, mine)]
    return _finish(fails)


def cmd_print_defaults(args, overrides) -> int:
    sc = _scenario(args, overrides)
    print(dump_scenario(sc), end="")
    return 0


# -- parser ------------------------------------------------------------------------

def _scenario_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", default="closed-loop", choices=sorted(PRESETS))
    g.add_argument("--config", help="scenario file (see print-defaults)")
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int)


def _data_args(p, corpus_many=True):
    if corpus_many:
        p.add_argument("--corpus", action="append", help="boundary corpus CSV (repeatable)")
    p.add_argument("--rates", help="send rates (bits/s, comma separated) when generating data")
    p.add_argument("--data-seed", type=int, default=1)
    p.add_argument("--data-duration", type=float, default=3.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aggrate", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one scenario")
    _scenario_args(p)
    p.add_argument("--out", default="out")
    p.add_argument("--warmup", type=float, default=0.0)
    p.add_argument("--packets", action="store_true", help="keep per-packet records")
    p.add_argument("--expect", action="append", help="e.g. 'delay_mean<0.005' (repeatable)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="sweep one scenario field")
    _scenario_args(p)
    p.add_argument("--axis", required=True, help="field, e.g. controller.k0 or station.rate")
    p.add_argument("--values", default="", help="comma separated")
    p.add_argument("--seeds", help="comma separated seed list")
    p.add_argument("--warmup", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--trend", action="append", help="column:inc|dec|nondec|noninc over seed medians")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("train-logit", help="fit the frame-boundary model (or the m=1 baseline)")
    _data_args(p)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--no-sigma", action="store_true")
    p.add_argument("--baseline", action="store_true", help="fit the m=1 threshold instead")
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--solver", choices=("lbfgs", "gd"), default="lbfgs")
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--folds", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_logit)

    p = sub.add_parser("train-rbf", help="fit the slot-level corrector")
    _data_args(p)
    p.add_argument("--logit", required=True, help="boundary model file")
    p.add_argument("--gamma", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--n-max", type=int, default=128)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_rbf)

    p = sub.add_parser("train-clf", help="fit the bottleneck classifier")
    p.add_argument("--corpus", help="bottleneck corpus CSV; generated when omitted")
    p.add_argument("--data-seed", type=int, default=1)
    p.add_argument("--data-duration", type=float, default=2.0)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--folds", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_clf)

    p = sub.add_parser("corpus", help="generate a boundary or bottleneck corpus CSV")
    p.add_argument("kind", choices=("boundary", "bottleneck"))
    _data_args(p, corpus_many=False)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_corpus)

    p = sub.add_parser("eval", help="score models on corpora")
    p.add_argument("--model", action="append", required=True)
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--out")
    p.add_argument("--expect", action="append", help="pooled metric check, e.g. 'f1>=0.9'")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("print-defaults", help="print a scenario file")
    _scenario_args(p)
    p.set_defaults(fn=cmd_print_defaults)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _split_overrides(extra)
        if overrides and args.cmd not in ("run", "sweep", "print-defaults"):
            raise ConfigError(overrides[0][0], "scenario overrides only apply to run, sweep and print-defaults")
        return args.fn(args, overrides)
    except (ConfigError, cp.SchemaError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
