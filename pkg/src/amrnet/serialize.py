"""Versioned, checksummed single-file container for fitted models.

Layout::

    magic (8 bytes) | version (u16 LE) | header length (u32 LE) | JSON header
    | raw array bytes | SHA-256 of everything before it (32 bytes)

The JSON header carries the model type tag, model metadata and, per array,
its name, dtype, shape and byte offset. Arrays are stored little-endian
and C-contiguous, so a round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatVersionError, ModelTypeError, SerializationError
from .nn.model import CnnArchitecture, CnnModel
from .trees.boosting import GbtModel
from .trees.forest import RfModel
from .trees.tree import pack_trees, unpack_trees

MAGIC = b"AMRNET\x00\x01"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<HI")
_DIGEST = 32

MODEL_TYPES = {"cnn": CnnModel, "gbt": GbtModel, "rf": RfModel}


def _type_tag(model) -> str:
    for tag, cls in MODEL_TYPES.items():
        if isinstance(model, cls):
            return tag
    raise ModelTypeError(f"cannot serialize {type(model).__name__}")


def _to_state(model) -> tuple[str, dict, dict]:
    tag = _type_tag(model)
    names = None if getattr(model, "feature_names", None) is None else list(model.feature_names)
    if tag == "cnn":
        return tag, {"arch": model.arch.to_dict(), "seed": model.seed}, model.state_arrays()
    if tag == "gbt":
        meta = {"base_score": model.base_score, "learning_rate": model.learning_rate,
                "n_features": model.n_features, "reg_lambda": model.reg_lambda, "feature_names": names}
        return tag, meta, pack_trees(model.trees)
    meta = {"n_features": model.n_features, "feature_names": names}
    return tag, meta, pack_trees(model.trees)


def _from_state(tag, meta, arrays):
    names = meta.get("feature_names")
    names = None if names is None else tuple(names)
    if tag == "cnn":
        model = CnnModel(CnnArchitecture.from_dict(meta["arch"]), meta["seed"])
        model.load_state_arrays(arrays)
        return model
    if tag == "gbt":
        return GbtModel(meta["base_score"], meta["learning_rate"], meta["n_features"],
                        unpack_trees(arrays), meta["reg_lambda"], names)
    if tag == "rf":
        return RfModel(meta["n_features"], unpack_trees(arrays), names)
    raise ModelTypeError(f"unknown model type tag {tag!r}")


def dumps(model) -> bytes:
    tag, meta, arrays = _to_state(model)
    blobs, specs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        specs.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"type": tag, "meta": meta, "arrays": specs, "data_bytes": offset},
                        sort_keys=True).encode()
    body = MAGIC + _PREFIX.pack(FORMAT_VERSION, len(header)) + header + b"".join(blobs)
    return body + hashlib.sha256(body).digest()


def loads(data: bytes, expected_type: str | None = None):
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise SerializationError("not a model container (bad magic)")
    if len(data) < len(MAGIC) + _PREFIX.size + _DIGEST:
        raise ChecksumError("container is truncated")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checksum mismatch: file is corrupt or truncated")
    version, hlen = _PREFIX.unpack_from(body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"container version {version}, this build reads {FORMAT_VERSION}")
    start = len(MAGIC) + _PREFIX.size
    header = json.loads(body[start : start + hlen])
    tag = header["type"]
    if expected_type is not None and tag != expected_type:
        raise ModelTypeError(f"expected a {expected_type!r} model, found {tag!r}")
    data_start = start + hlen
    arrays = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        a = np.frombuffer(body, dtype=dtype, count=count, offset=data_start + spec["offset"])
        arrays[spec["name"]] = a.reshape(spec["shape"]).astype(dtype.newbyteorder("="))
    return _from_state(tag, header["meta"], arrays)


def save_model(model, path) -> Path:
    """Write atomically (temp file, then rename)."""
    path = Path(path)
    data = dumps(model)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_model(path, expected_type: str | None = None):
    """Load a model; ``expected_type`` ("cnn", "gbt", "rf") guards against mix-ups."""
    return loads(Path(path).read_bytes(), expected_type)
