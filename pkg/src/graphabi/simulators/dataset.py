"""Self-describing binary persistence for simulated (theta, graph) records.

Layout (all little-endian):

    header:  magic b"GABI" | version u32 | experiment 16s (NUL padded)
             | record_count u64 | theta_dim u32 | n_max u32 | p u32
             | flags u32 (bit 0: adjacency stored)
    record:  theta f8[theta_dim] | seed u64 | n u32 (real node count)
             | adjacency f8[n_max * n_max] (if flagged) | features f8[n_max * p]

Records are fixed width, so truncation is detectable from the file size alone
and no partial records are ever returned.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from graphabi.graphs import PaddedGraph

MAGIC = b"GABI"
VERSION = 1
_HEADER = struct.Struct("<4sI16sQIIII")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    theta: np.ndarray      # natural units
    graph: PaddedGraph
    seed: int = 0


def _record_size(theta_dim: int, n_max: int, p: int, has_adjacency: bool) -> int:
    size = 8 * theta_dim + 8 + 4 + 8 * n_max * p
    if has_adjacency:
        size += 8 * n_max * n_max
    return size


def write_dataset(records: Sequence[DatasetRecord], path: str | Path,
                  experiment: str, store_adjacency: bool = True) -> None:
    if not records:
        raise DatasetFormatError("refusing to write an empty dataset")
    first = records[0]
    theta_dim = first.theta.size
    n_max = first.graph.n_max
    p = first.graph.features.shape[1]
    exp_bytes = experiment.encode()[:16].ljust(16, b"\0")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, exp_bytes, len(records),
                              theta_dim, n_max, p, 1 if store_adjacency else 0))
        for rec in records:
            if rec.theta.size != theta_dim or rec.graph.n_max != n_max \
                    or rec.graph.features.shape[1] != p:
                raise DatasetFormatError("records must share shapes")
            fh.write(np.ascontiguousarray(rec.theta, dtype="<f8").tobytes())
            fh.write(struct.pack("<QI", rec.seed, rec.graph.n))
            if store_adjacency:
                fh.write(np.ascontiguousarray(rec.graph.adjacency,
                                              dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(rec.graph.features,
                                          dtype="<f8").tobytes())


def read_dataset(path: str | Path) -> tuple[str, list[DatasetRecord]]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise DatasetFormatError("file too short for header")
    magic, version, exp_bytes, count, theta_dim, n_max, p, flags = \
        _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}")
    has_adjacency = bool(flags & 1)
    rec_size = _record_size(theta_dim, n_max, p, has_adjacency)
    expected = _HEADER.size + count * rec_size
    if len(blob) != expected:
        raise DatasetFormatError(
            f"size mismatch: record_count says {expected} bytes, file has {len(blob)}"
        )
    experiment = exp_bytes.rstrip(b"\0").decode()
    records = []
    off = _HEADER.size
    for _ in range(count):
        theta = np.frombuffer(blob, "<f8", theta_dim, off).copy()
        off += 8 * theta_dim
        seed, n = struct.unpack_from("<QI", blob, off)
        off += 12
        if has_adjacency:
            adj = np.frombuffer(blob, "<f8", n_max * n_max, off)
            adj = adj.reshape(n_max, n_max).copy()
            off += 8 * n_max * n_max
        else:
            adj = np.zeros((n_max, n_max))
        feats = np.frombuffer(blob, "<f8", n_max * p, off).reshape(n_max, p).copy()
        off += 8 * n_max * p
        mask = np.zeros(n_max)
        mask[:n] = 1.0
        records.append(DatasetRecord(
            theta=theta,
            graph=PaddedGraph(adjacency=adj, features=feats, mask=mask),
            seed=seed,
        ))
    return experiment, records
