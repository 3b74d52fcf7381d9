"""CSV and binary writers. Floats are written with ``repr`` so output bytes
depend only on the values."""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import ChannelRealization
from .statistics import StatResult

__all__ = ["write_csv", "write_channel_csv", "write_channel_binary", "read_channel_binary", "write_stat_csv", "BINARY_MAGIC"]

BINARY_MAGIC = b"GBSMCH01"


def _fmt(x) -> str:
    if isinstance(x, (str, int, np.integer)) and not isinstance(x, bool):
        return str(x)
    return repr(float(x))


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_channel_csv(path, channel: ChannelRealization) -> Path:
    """Long format: q, p, t_index, f_index, real, imag."""
    h = channel.ctf
    Q, P, T, B = h.shape
    q, p, t, b = (a.reshape(-1) for a in np.indices(h.shape))
    flat = h.reshape(-1)
    rows = zip(q, p, t, b, flat.real, flat.imag)
    return write_csv(path, ("q", "p", "t_index", "f_index", "real", "imag"), rows)


def write_channel_binary(path, channel: ChannelRealization) -> Path:
    """Header: 8-byte magic, uint32 ndim, ndim x uint64 dims (little endian);
    then interleaved real/imag float64 little endian in C order."""
    path = Path(path)
    h = np.ascontiguousarray(channel.ctf, dtype=np.complex128)
    with path.open("wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<I", h.ndim))
        fh.write(struct.pack(f"<{h.ndim}Q", *h.shape))
        fh.write(h.view(np.float64).astype("<f8").tobytes())
    return path


def read_channel_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != BINARY_MAGIC:
        raise ValueError("not a channel dump")
    (ndim,) = struct.unpack_from("<I", data, 8)
    dims = struct.unpack_from(f"<{ndim}Q", data, 12)
    body = np.frombuffer(data, dtype="<f8", offset=12 + 8 * ndim)
    return body.view(np.complex128).reshape(dims)


def write_stat_csv(path, result: StatResult) -> Path:
    """lag columns, |value|, real, imag, realization_count."""
    lags = np.asarray(result.lags)
    if lags.ndim == 1:
        lags = lags[:, None]
        header = ("lag",)
    else:
        header = tuple(result.axes)
    v = np.asarray(result.values)
    rows = (tuple(lags[i]) + (abs(v[i]), v[i].real, v[i].imag, result.realization_count) for i in range(len(v)))
    return write_csv(path, header + ("abs", "real", "imag", "realization_count"), rows)
