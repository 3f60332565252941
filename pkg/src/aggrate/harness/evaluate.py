"""Score saved models against corpus files, per load level."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..bottleneck import ClfModel
from ..metrics import f1_score, rmse
from ..tsml.logit import LogitModel, ThresholdModel, build_boundary_features
from ..tsml.modelio import load_model
from ..tsml.rbf import RbfModel
from .corpus import (SchemaError, BoundaryTrace, corpus_kind, read_boundary_csv, read_clf_csv,
                     slot_dataset)


@dataclass
class EvalRow:
    model: str
    corpus: str
    load: float  # send rate, NaN for the pooled row
    metric: str
    value: float
    count: int


def _f1_rows(name, cname, y, pred, load):
    """Pooled and per-load F1 plus accuracy (F1 alone says little on a one-class load level)."""
    rows = []
    for r in [None] + np.unique(load).tolist():
        k = np.ones(len(y), bool) if r is None else load == r
        lv = float("nan") if r is None else float(r)
        rows.append(EvalRow(name, cname, lv, "f1", f1_score(y[k], pred[k]), int(k.sum())))
        rows.append(EvalRow(name, cname, lv, "accuracy", float(np.mean(y[k] == pred[k])), int(k.sum())))
    return rows


def eval_boundary(model, traces: Sequence[BoundaryTrace], name: str = "model", cname: str = "corpus"):
    """F1 of a boundary model (logistic or m=1 threshold) on every trace."""
    rows = []
    ys, ps, ls = [], [], []
    for t in traces:
        if isinstance(model, ThresholdModel):
            X = build_boundary_features(t.ts_us, 1, False)
            y = t.labels[1:]
        else:
            X = build_boundary_features(t.ts_us, model.m, model.uses_sigma)
            y = t.labels[model.m:]
        ys.append(y)
        ps.append(model.predict(X))
        ls.append(np.full(len(y), t.rate))
    if ys:
        rows += _f1_rows(name, cname, np.concatenate(ys), np.concatenate(ps), np.concatenate(ls))
    return rows


def eval_corrector(rbf: RbfModel, logit: LogitModel, traces: Sequence[BoundaryTrace], name: str = "model",
                   cname: str = "corpus"):
    """Slot RMSE of the raw boundary estimate and of the corrected estimate."""
    s = slot_dataset(traces, logit, rbf.n_max, d=rbf.d)
    if s.X.shape[1] != rbf.support.shape[1]:
        raise SchemaError("slot features do not match the corrector's dimension")
    pred = rbf.predict(s.X) if len(s.y) else np.zeros(0)
    rows = []
    for r in [None] + sorted(set(s.load.tolist())):
        k = np.ones(len(s.y), bool) if r is None else s.load == r
        if not k.any():
            continue
        load = float("nan") if r is None else float(r)
        rows.append(EvalRow(name, cname, load, "rmse_raw", rmse(s.raw[k], s.y[k]), int(k.sum())))
        rows.append(EvalRow(name, cname, load, "rmse", rmse(pred[k], s.y[k]), int(k.sum())))
    return rows


def eval_classifier(model: ClfModel, path, name: str = "model", cname: str = "corpus"):
    data = read_clf_csv(path)
    if data.X.shape[1] != model.n + 1:
        raise SchemaError(f"corpus has {data.X.shape[1] - 1} aggregation columns, model expects n={model.n}")
    return _f1_rows(name, cname, data.y, model.predict(data.X), data.load)


def eval_models(model_paths: Sequence[str], corpus_paths: Sequence[str]) -> list[EvalRow]:
    """Evaluate every model on every compatible corpus.

    A corrector needs a boundary model to produce its raw estimates, so the
    first logistic boundary model in ``model_paths`` is paired with it.
    Incompatible model/corpus pairs raise ``SchemaError``.
    """
    models = [(str(p), load_model(p)) for p in model_paths]
    logit = next((m for _, m in models if isinstance(m, LogitModel)), None)
    rows: list[EvalRow] = []
    for cpath in corpus_paths:
        kind = corpus_kind(cpath)
        traces = read_boundary_csv(cpath) if kind == "boundary" else None
        for mpath, model in models:
            if isinstance(model, ClfModel):
                if kind != "bottleneck":
                    raise SchemaError(f"{mpath} is a bottleneck classifier but {cpath} is a {kind} corpus")
                rows += eval_classifier(model, cpath, mpath, str(cpath))
            elif isinstance(model, RbfModel):
                if kind != "boundary":
                    raise SchemaError(f"{mpath} needs a boundary corpus, {cpath} is {kind}")
                if logit is None:
                    raise SchemaError("evaluating a corrector needs a boundary model as well")
                rows += eval_corrector(model, logit, traces, mpath, str(cpath))
            else:
                if kind != "boundary":
                    raise SchemaError(f"{mpath} needs a boundary corpus, {cpath} is {kind}")
                rows += eval_boundary(model, traces, mpath, str(cpath))
    return rows


def report_csv(rows: Sequence[EvalRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "corpus", "load", "metric", "value", "count"])
    for r in rows:
        w.writerow([r.model, r.corpus, "" if np.isnan(r.load) else repr(r.load), r.metric, repr(r.value),
                    r.count])
    return buf.getvalue()
