"""CSV export of simulation traces."""
import csv
from pathlib import Path

from .runner import COLUMNS


def header():
    return [f"{name} [{unit}]" for name, unit in COLUMNS]


def _fmt(value):
    # 17 significant digits round-trip every double exactly.
    return format(float(value), ".17g")


def export_csv(trace, path):
    """Write ``trace`` as CSV: one header row naming each signal and its unit, then one row per sample."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header())
            for row in trace.data:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write trace to {path}: {exc.strerror}") from None
    return path
