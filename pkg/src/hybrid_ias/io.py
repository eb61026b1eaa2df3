"""Artifact files: atomic writes, CSV tables and 16-bit PGM images.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a partial file.
"""

import csv
import io
import os
import tempfile

import numpy as np

from .exceptions import MissingArtifact

TRACE_SCHEMA = "hybrid-ias-trace/1"
METRICS_SCHEMA = "hybrid-ias-metrics/1"


def atomic_write(path, data):
    """Write `data` (str or bytes) to `path` via write-temp-then-rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v):
    """Shortest round-trip text for a number."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_text(header, rows, comment=None):
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_vector(path, v, name="value"):
    v = np.asarray(v).ravel()
    atomic_write(path, table_text(["index", name], zip(range(v.size), v)))


def read_vector(path):
    """Read the value column of a vector CSV (or a bare one-column file)."""
    rows = read_table(path)
    if not rows:
        return np.zeros(0)
    key = [k for k in rows[0] if k != "index"][0]
    return np.array([float(r[key]) for r in rows])


def read_table(path):
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingArtifact(f"missing file {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_matrix(path):
    """Dense matrix from a plain comma-separated file without header."""
    if not os.path.exists(path):
        raise MissingArtifact(f"missing file {path}")
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_keyvalue(path, items, comment=None):
    atomic_write(path, table_text(["key", "value"], items, comment))


def read_keyvalue(path):
    return {r["key"]: r["value"] for r in read_table(path)}


def pgm_bytes(img, lo=None, hi=None):
    """Binary 16-bit PGM (P5) of a 2D array, scaled linearly from [lo, hi] to [0, 65535].

    The scaling interval is recorded in a header comment.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be two-dimensional")
    lo = float(img.min()) if lo is None else float(lo)
    hi = float(img.max()) if hi is None else float(hi)
    span = hi - lo
    scaled = np.zeros(img.shape) if span <= 0 else (np.clip(img, lo, hi) - lo) / span
    pix = np.round(scaled * 65535).astype(">u2")
    rows, cols = img.shape
    header = f"P5\n# min={lo!r} max={hi!r}\n{cols} {rows}\n65535\n".encode("ascii")
    return header + pix.tobytes()


def write_pgm(path, img, lo=None, hi=None):
    atomic_write(path, pgm_bytes(img, lo, hi))


def read_pgm(path):
    """Return ``(image scaled back to [min, max], (min, max))``."""
    if not os.path.exists(path):
        raise MissingArtifact(f"missing file {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos, lo, hi = [], 0, 0.0, 1.0
    while len(tokens) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end].decode("ascii")
        pos = end + 1
        if line.startswith("#"):
            for part in line[1:].split():
                k, _, v = part.partition("=")
                if k == "min":
                    lo = float(v)
                elif k == "max":
                    hi = float(v)
            continue
        tokens.extend(line.split())
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM file")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pix = np.frombuffer(data[pos:], dtype=">u2" if maxval > 255 else np.uint8, count=rows * cols)
    return lo + pix.reshape(rows, cols) / maxval * (hi - lo), (lo, hi)
