"""Binary tensor files and deterministic CSV writers.

Tensor file layout: the 8-byte magic ``MFGTNSR1``, a little-endian ``uint64``
header length, a UTF-8 JSON header (sorted keys) and the raw little-endian
float64 payload in C order. The header carries ``shape``, ``layout`` and any
caller metadata such as the tangent ``kind``.

CSV numbers are written with ``%.17g`` so that every float round-trips and
reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .ensemble import ProcessTensor, RandomVariable
from .errors import ConfigurationError

__all__ = ["MAGIC", "write_tensor", "read_tensor", "fmt", "write_csv", "read_csv"]

MAGIC = b"MFGTNSR1"
_LAYOUTS = {4: "scenario,path,node,dim", 3: "scenario,path,dim"}


def _layout(values: np.ndarray) -> str:
    return _LAYOUTS.get(values.ndim, ",".join(f"axis{i}" for i in range(values.ndim)))


def write_tensor(path: str | Path, tensor: Any, meta: dict | None = None) -> Path:
    """Write an array, :class:`RandomVariable` or :class:`ProcessTensor`."""
    values = tensor.values if isinstance(tensor, (RandomVariable, ProcessTensor)) else tensor
    values = np.ascontiguousarray(values, dtype="<f8")
    header = {"shape": list(values.shape), "dtype": "<f8", "layout": _layout(values),
              "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(values.tobytes(order="C"))
    return path


def read_tensor(path: str | Path) -> tuple[np.ndarray, dict]:
    """Return ``(values, header)``; the array is read-only."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigurationError(f"{path}: not a tensor file")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n].decode("utf-8"))
    shape = tuple(header["shape"])
    values = np.frombuffer(raw, dtype="<f8", offset=16 + n)
    if values.size != int(np.prod(shape, dtype=np.int64)):
        raise ConfigurationError(f"{path}: payload size does not match header shape {shape}")
    return values.reshape(shape), header


def fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        if len(r) != len(columns):
            raise ValueError(f"row has {len(r)} fields, header has {len(columns)}")
        w.writerow([fmt(v) for v in r])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
