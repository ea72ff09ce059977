"""CSV and binary writers for samples, increments and result tables."""
import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RSKOPATH"
_HEADER = struct.Struct("<QQQ")


def fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, rows, comment=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def read_csv(path):
    """Header and rows (as strings) of a CSV written by ``write_csv``."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_sample_csv(path, times, values, comment=None):
    values = np.asarray(values, dtype=float)
    cols = ["t"] + [f"x{k + 1}" for k in range(values.shape[1])]
    return write_csv(path, cols, np.column_stack([times, values]).tolist(), comment)


def write_samples_binary(path, times, values):
    """Magic, uint64 (n_draws, n_times, d), float64 times, float64 values; little-endian, row-major."""
    values = np.asarray(values, dtype="<f8")
    n_draws, n_times, d = values.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(n_draws, n_times, d))
        fh.write(np.asarray(times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(values).tobytes())
    return path


def read_samples_binary(path):
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a sample file (bad magic)")
    n_draws, n_times, d = _HEADER.unpack_from(data, 8)
    off = 8 + _HEADER.size
    times = np.frombuffer(data, dtype="<f8", count=n_times, offset=off)
    off += 8 * n_times
    values = np.frombuffer(data, dtype="<f8", count=n_draws * n_times * d, offset=off)
    return times.copy(), values.reshape(n_draws, n_times, d).copy()


def write_increments_csv(path, x, comment=None):
    d = x.d
    cols = (["i", "t_lo", "t_hi"] + [f"l1_{a + 1}" for a in range(d)]
            + [f"l2_{a + 1}{b + 1}" for a in range(d) for b in range(d)])
    rows = [[int(r[0])] + list(r[1:]) for r in x.to_rows()]
    return write_csv(path, cols, rows, comment)
