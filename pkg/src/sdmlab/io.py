"""CSV output helpers. Floats are written with 9 significant digits."""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Iterable, Sequence


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return Path(path)


def write_psd(path: Path, est, f_max: float | None = None) -> Path:
    if f_max is not None:
        est = est.truncated(f_max)
    return write_csv(path, ["freq_norm", "psd_db"], zip(est.freqs.tolist(), est.psd_db.tolist()))


def write_metrics(path: Path, metrics: Sequence[tuple[str, object, str]]) -> Path:
    return write_csv(path, ["key", "value", "units"], metrics)


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
