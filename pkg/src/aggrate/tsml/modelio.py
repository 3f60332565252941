"""Versioned binary container for trained models, plus a JSON text export.

Layout (little-endian)::

    magic "AGRM" | u16 version | u8 kind | kind-specific scalars | arrays

Each array is stored as ``u32 ndim, u32 shape..., f64 data``.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from ..logistic import Scaler
from .logit import LogitModel, ThresholdModel
from .rbf import RbfModel

MAGIC = b"AGRM"
VERSION = 1
KIND_LOGIT, KIND_RBF, KIND_CLF, KIND_THRESHOLD = 1, 2, 3, 4
KIND_NAMES = {KIND_LOGIT: "logit", KIND_RBF: "rbf", KIND_CLF: "bottleneck", KIND_THRESHOLD: "threshold"}


class ModelFormatError(ValueError):
    pass


def _put_array(buf: BinaryIO, a) -> None:
    a = np.ascontiguousarray(a, dtype="<f8")
    buf.write(struct.pack("<I", a.ndim))
    buf.write(struct.pack(f"<{a.ndim}I", *a.shape))
    buf.write(a.tobytes())


def _get(buf: BinaryIO, fmt: str):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise ModelFormatError("truncated model file")
    return struct.unpack(fmt, raw)


def _get_array(buf: BinaryIO) -> np.ndarray:
    (ndim,) = _get(buf, "<I")
    shape = _get(buf, f"<{ndim}I") if ndim else ()
    n = int(np.prod(shape)) if ndim else 1
    raw = buf.read(8 * n)
    if len(raw) != 8 * n:
        raise ModelFormatError("truncated model file")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def model_kind(model) -> int:
    from ..bottleneck import ClfModel
    if isinstance(model, ClfModel):
        return KIND_CLF
    if isinstance(model, LogitModel):
        return KIND_LOGIT
    if isinstance(model, RbfModel):
        return KIND_RBF
    if isinstance(model, ThresholdModel):
        return KIND_THRESHOLD
    raise TypeError(f"cannot serialise {type(model).__name__}")


def dumps(model) -> bytes:
    from ..bottleneck import ClfModel
    kind = model_kind(model)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HB", VERSION, kind))
    if kind == KIND_LOGIT:
        buf.write(struct.pack("<IBd", model.m, int(model.uses_sigma), model.theta0))
        _put_array(buf, model.theta)
        _put_array(buf, model.scaler.mean)
        _put_array(buf, model.scaler.scale)
    elif kind == KIND_CLF:
        assert isinstance(model, ClfModel)
        buf.write(struct.pack("<IId", model.n, model.p, model.bias))
        _put_array(buf, model.weights)
        _put_array(buf, model.scaler.mean)
        _put_array(buf, model.scaler.scale)
    elif kind == KIND_RBF:
        buf.write(struct.pack("<ddIId", model.gamma, model.bias, model.d, model.n_max, model.lam))
        _put_array(buf, model.support)
        _put_array(buf, model.weights)
        _put_array(buf, model.scaler.mean)
        _put_array(buf, model.scaler.scale)
    else:
        buf.write(struct.pack("<d", model.threshold))
    return buf.getvalue()


def loads(data: bytes, expect_kind: int | None = None):
    from ..bottleneck import ClfModel
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, kind = _get(buf, "<HB")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    if expect_kind is not None and kind != expect_kind:
        raise ModelFormatError(f"expected a {KIND_NAMES.get(expect_kind)} model, "
                               f"found {KIND_NAMES.get(kind, kind)}")
    if kind == KIND_LOGIT:
        m, sig, t0 = _get(buf, "<IBd")
        theta, mean, scale = _get_array(buf), _get_array(buf), _get_array(buf)
        return LogitModel(t0, theta, m, bool(sig), Scaler(mean, scale))
    if kind == KIND_CLF:
        n, p, bias = _get(buf, "<IId")
        w, mean, scale = _get_array(buf), _get_array(buf), _get_array(buf)
        return ClfModel(bias, w, n, p, Scaler(mean, scale))
    if kind == KIND_RBF:
        gamma, bias, d, n_max, lam = _get(buf, "<ddIId")
        sup, w, mean, scale = _get_array(buf), _get_array(buf), _get_array(buf), _get_array(buf)
        return RbfModel(sup, w, gamma, bias, Scaler(mean, scale), d, n_max, lam)
    if kind == KIND_THRESHOLD:
        (thr,) = _get(buf, "<d")
        return ThresholdModel(thr)
    raise ModelFormatError(f"unknown model kind {kind}")


def save_model(model, path: Union[str, Path]) -> None:
    Path(path).write_bytes(dumps(model))


def load_model(path: Union[str, Path], expect_kind: int | None = None):
    return loads(Path(path).read_bytes(), expect_kind)


def to_text(model) -> str:
    """Human-readable JSON rendering of a model."""
    kind = model_kind(model)
    out = {"kind": KIND_NAMES[kind], "version": VERSION}
    if kind == KIND_LOGIT:
        out.update(m=model.m, uses_sigma=model.uses_sigma, theta0=model.theta0,
                   theta=model.theta.tolist(), scaler_mean=model.scaler.mean.tolist(),
                   scaler_scale=model.scaler.scale.tolist())
    elif kind == KIND_CLF:
        out.update(n=model.n, p=model.p, bias=model.bias, weights=model.weights.tolist(),
                   scaler_mean=model.scaler.mean.tolist(), scaler_scale=model.scaler.scale.tolist())
    elif kind == KIND_RBF:
        out.update(gamma=model.gamma, bias=model.bias, d=model.d, n_max=model.n_max, lam=model.lam,
                   n_support=int(len(model.support)), weights=model.weights.tolist())
    else:
        out.update(threshold=model.threshold)
    return json.dumps(out, indent=2)
