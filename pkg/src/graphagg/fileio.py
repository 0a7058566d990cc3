"""Binary feature/checkpoint/embedding files and the text trial and score lists.

All binary integers are little-endian ``u32``; all matrices are row-major
little-endian float64.

Feature file::

    b"GAFF" | version | N | F | N*F doubles

Checkpoint (blocks repeat until end of file)::

    b"GAGG" | version | { name_len | name (utf-8) | rows | cols | rows*cols doubles }*

Embedding store::

    b"GEMB" | version | count | D | { id_len | id (utf-8) | D doubles }*

Writes go to a temporary file in the target directory and are renamed into
place, so readers never see a half-written file.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError, ParseError, ShapeError
from .gat import FrameGraph

__all__ = [
    "FORMAT_VERSION",
    "Trial",
    "write_feature_file",
    "read_feature_file",
    "save_checkpoint",
    "load_checkpoint",
    "write_embedding_store",
    "read_embedding_store",
    "parse_trials",
    "write_trials",
    "write_scores",
    "read_scores",
]

FORMAT_VERSION = 1
FEATURE_MAGIC = b"GAFF"
CHECKPOINT_MAGIC = b"GAGG"
STORE_MAGIC = b"GEMB"

_U32 = struct.Struct("<I")
_F64 = np.dtype("<f8")


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes, path):
        self.buf = memoryview(data)
        self.pos = 0
        self.path = path

    def at_end(self) -> bool:
        return self.pos == len(self.buf)

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated while reading {what}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def doubles(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype=_F64).astype(np.float64)

    def header(self, magic: bytes) -> None:
        got = bytes(self.take(4, "magic"))
        if got != magic:
            raise FormatError(f"{self.path}: bad magic {got!r}, expected {magic!r}")
        version = self.u32("version")
        if version != FORMAT_VERSION:
            raise FormatError(f"{self.path}: unsupported format version {version}")


def _matrix_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=_F64).tobytes()


# ---------------------------------------------------------------- features


def write_feature_file(path, features) -> None:
    x = features.node_features if isinstance(features, FrameGraph) else np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be N x F, got {x.shape}")
    n, f = x.shape
    _atomic_write(path, FEATURE_MAGIC + _U32.pack(FORMAT_VERSION) + _U32.pack(n) + _U32.pack(f) + _matrix_bytes(x))


def read_feature_file(path) -> FrameGraph:
    r = _Reader(Path(path).read_bytes(), path)
    r.header(FEATURE_MAGIC)
    n, f = r.u32("N"), r.u32("F")
    data = r.doubles(n * f, "feature data").reshape(n, f)
    if not r.at_end():
        raise FormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return FrameGraph(data)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, params: Mapping[str, np.ndarray]) -> None:
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC + _U32.pack(FORMAT_VERSION))
    for name, value in params.items():
        a = np.asarray(value, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"parameter {name!r} is not 2-D: {a.shape}")
        raw = name.encode("utf-8")
        out.write(_U32.pack(len(raw)) + raw + _U32.pack(a.shape[0]) + _U32.pack(a.shape[1]))
        out.write(_matrix_bytes(a))
    _atomic_write(path, out.getvalue())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    r = _Reader(Path(path).read_bytes(), path)
    r.header(CHECKPOINT_MAGIC)
    params: dict[str, np.ndarray] = {}
    while not r.at_end():
        name = bytes(r.take(r.u32("name length"), "name")).decode("utf-8")
        rows, cols = r.u32("rows"), r.u32("cols")
        if name in params:
            raise FormatError(f"{path}: duplicate parameter {name!r}")
        params[name] = r.doubles(rows * cols, f"block {name!r}").reshape(rows, cols)
    return params


# ---------------------------------------------------------------- embeddings


def write_embedding_store(path, store: Mapping[str, np.ndarray]) -> None:
    items = [(k, np.asarray(v, dtype=np.float64).reshape(-1)) for k, v in store.items()]
    dims = {v.size for _, v in items}
    if len(dims) > 1:
        raise ShapeError(f"embeddings have mixed widths {sorted(dims)}")
    dim = dims.pop() if dims else 0
    out = io.BytesIO()
    out.write(STORE_MAGIC + _U32.pack(FORMAT_VERSION) + _U32.pack(len(items)) + _U32.pack(dim))
    for key, vec in items:
        if not key:
            raise ValueError("embedding ids must be non-empty")
        raw = key.encode("utf-8")
        out.write(_U32.pack(len(raw)) + raw + _matrix_bytes(vec))
    _atomic_write(path, out.getvalue())


def read_embedding_store(path) -> dict[str, np.ndarray]:
    r = _Reader(Path(path).read_bytes(), path)
    r.header(STORE_MAGIC)
    count, dim = r.u32("count"), r.u32("dimension")
    store: dict[str, np.ndarray] = {}
    for _ in range(count):
        key = bytes(r.take(r.u32("id length"), "id")).decode("utf-8")
        if key in store:
            raise FormatError(f"{path}: duplicate id {key!r}")
        store[key] = r.doubles(dim, f"embedding {key!r}")
    if not r.at_end():
        raise FormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return store


# ---------------------------------------------------------------- trials & scores


@dataclass(frozen=True)
class Trial:
    target: bool
    enroll_id: str
    test_id: str

    @property
    def label(self) -> str:
        return "target" if self.target else "nontarget"


_LABELS = {"1": True, "0": False, "target": True, "nontarget": False}


def parse_trials(path) -> list[Trial]:
    """Read ``label enroll_id test_id`` lines; label is ``1`` (target) or ``0``."""
    trials = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 3:
                raise ParseError(f"expected 3 fields, got {len(parts)}", lineno, path)
            label, enroll, test = parts
            if label not in _LABELS:
                raise ParseError(f"invalid label {label!r} (use 1 or 0)", lineno, path)
            trials.append(Trial(_LABELS[label], enroll, test))
    return trials


def write_trials(path, trials: Iterable[Trial]) -> None:
    text = "".join(f"{int(t.target)} {t.enroll_id} {t.test_id}\n" for t in trials)
    _atomic_write(path, text.encode("utf-8"))


def write_scores(path, rows: Iterable[tuple[str, str, float]]) -> None:
    text = "".join(f"{a} {b} {s:.6f}\n" for a, b, s in rows)
    _atomic_write(path, text.encode("utf-8"))


def read_scores(path) -> dict[tuple[str, str], float]:
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ParseError(f"expected 'enroll test score', got {len(parts)} fields", lineno, path)
            try:
                value = float(parts[2])
            except ValueError:
                raise ParseError(f"bad score {parts[2]!r}", lineno, path) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite score {parts[2]!r}", lineno, path)
            scores[(parts[0], parts[1])] = value
    return scores
