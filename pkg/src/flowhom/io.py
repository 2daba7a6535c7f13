"""CSV grids and tables, SVG charts and run manifests."""

import csv
import hashlib
import json
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["write_grid_csv", "read_grid_csv", "write_table_csv", "write_svg_chart", "write_manifest",
           "file_digest", "to_jsonable"]

FLOAT_FORMAT = "{:.12e}"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating, Fraction)):
        return FLOAT_FORMAT.format(float(v))
    return "" if v is None else str(v)


def write_grid_csv(path, box, values):
    """Cell-centre coordinates and values, one row per cell in C order."""
    pts = box.centers().reshape(box.dimension, -1)
    vals = np.asarray(values, dtype=float).ravel()
    header = [f"x{a + 1}" for a in range(box.dimension)] + ["value"]
    rows = np.column_stack([pts.T, vals])
    write_table_csv(path, header, rows)


def read_grid_csv(path):
    """Inverse of :func:`write_grid_csv`: ``(points (d, n...), values (n...))``.

    The points must form a tensor grid written in C order.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    d = len(header) - 1
    axes = [np.unique(data[:, a]) for a in range(d)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise ValueError(f"{path}: rows do not form a tensor grid")
    pts = data[:, :d].T.reshape((d,) + shape)
    return pts, data[:, d].reshape(shape)


def write_table_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_svg_chart(path, series, xlabel, ylabel, title="", logx=False, logy=False):
    """Line chart of ``series`` (label -> (x, y)) with deterministic SVG output."""
    with matplotlib.rc_context({"svg.hashsalt": "flowhom", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (x, y) in series.items():
            ax.plot(x, y, marker="o", label=label)
        ax.set_xscale("log" if logx else "linear")
        ax.set_yscale("log" if logy else "linear")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, scenario, config_hash, command, outputs, checks, extra=None, started=None):
    """``manifest.json`` listing outputs with digests, checks and timestamps."""
    out_dir = Path(out_dir)
    from . import __version__
    manifest = {
        "tool": "flowhom",
        "version": __version__,
        "command": command,
        "scenario": scenario,
        "config_hash": config_hash,
        "started": started or datetime.now(timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {name: file_digest(out_dir / name) for name in sorted(outputs)},
        "checks": to_jsonable(checks),
        "passed": all(bool(v) for v in checks.values()),
    }
    if extra:
        manifest["details"] = to_jsonable(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
