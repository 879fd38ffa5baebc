"""Deterministic CSV/JSON persistence with staged writes and checksums."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import ChecksumError, ConfigError

PROBE_COLUMNS = ("replica", "t", "eta_index", "re_X", "im_X", "Q", "re_scriptQ", "im_scriptQ")


def fmt(v) -> str:
    """Shortest round-trip text for numbers; integers stay integers."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path: Path, writer):
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".staging", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            writer(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows):
    def w(f):
        out = csv.writer(f, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([fmt(v) for v in row])
    return _atomic_write(path, w)


def write_json(path, obj):
    return _atomic_write(path, lambda f: f.write(json.dumps(obj, indent=2, sort_keys=True) + "\n"))


def read_csv(path) -> tuple[list, list]:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise ConfigError(f"missing input {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"empty input {path}")
    return rows[0], rows[1:]


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"missing input {path}: {exc.strerror}") from None


def probe_rows(X, Q, SQ, times, replicas):
    """Rows of the probe CSV from arrays ``X (M, T, J)``, ``Q (M, T)``, ``SQ (M, T)``."""
    M, T, J = X.shape
    for m in range(M):
        for i in range(T):
            q, sq = Q[m, i], SQ[m, i]
            for j in range(J):
                x = X[m, i, j]
                yield (int(replicas[m]), float(times[i]), j, float(x.real), float(x.imag),
                       float(q), float(sq.real), float(sq.imag))


def write_probe_csv(path, X, Q, SQ, times, replicas):
    return write_csv(path, PROBE_COLUMNS, probe_rows(X, Q, SQ, times, replicas))


def read_probe_csv(path):
    """Inverse of ``write_probe_csv``: returns ``(replicas, times, X, Q, SQ)``."""
    header, rows = read_csv(path)
    if tuple(header) != PROBE_COLUMNS:
        raise ConfigError(f"{path}: unexpected columns {header}")
    a = np.array(rows, dtype=float) if rows else np.zeros((0, len(PROBE_COLUMNS)))
    replicas = np.unique(a[:, 0]).astype(int)
    times = np.unique(a[:, 1])
    J = int(a[:, 2].max()) + 1 if len(a) else 0
    M, T = len(replicas), len(times)
    if len(a) != M * T * J:
        raise ConfigError(f"{path}: ragged probe table")
    a = a.reshape(M, T, J, -1)
    X = a[..., 3] + 1j * a[..., 4]
    return replicas, times, X, a[:, :, 0, 5], a[:, :, 0, 6] + 1j * a[:, :, 0, 7]


def verify_checksums(manifest: dict, root):
    """Raise ChecksumError if any listed file differs from its recorded digest."""
    for name, digest in manifest.get("files", {}).items():
        p = Path(root) / name
        if not p.exists():
            raise ConfigError(f"missing input {p}")
        if sha256(p) != digest:
            raise ChecksumError(f"checksum mismatch for {p}")
