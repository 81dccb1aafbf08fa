"""CSV output and optional figure rendering."""

from __future__ import annotations

import csv
import io
import math
import os


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(float(x))
    if hasattr(x, "item"):
        return _fmt(x.item())
    return str(x)


def csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def emit_csv(rows, path, columns):
    """Write ``rows`` with a fixed column order; ``path`` of None or '-' means stdout."""
    text = csv_text(rows, columns)
    if path in (None, "-"):
        import sys
        sys.stdout.write(text)
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def sibling(path, suffix):
    """``runs/m.csv`` -> ``runs/m<suffix>``."""
    root, _ = os.path.splitext(path)
    return root + suffix


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({"figure.figsize": (6.0, 4.2), "axes.grid": True, "grid.alpha": 0.3,
                         "legend.fontsize": 8, "savefig.bbox": "tight", "savefig.dpi": 150})
    return plt


_LABELS = {"T": "time duration T (s)", "D": "task input bits per user", "M": "RMS transmissive elements M",
           "K": "number of users K", "iterations": "outer iteration cap"}


def plot_summary(summary, path):
    """Seed-mean metric against the swept value, one line per benchmark."""
    plt = _pyplot()
    if not summary:
        return None
    param = summary[0]["param"]
    metric = summary[0]["metric"]
    fig, ax = plt.subplots()
    benches = list(dict.fromkeys(r["benchmark"] for r in summary))
    markers = "osD^v<>p"
    for i, b in enumerate(benches):
        pts = sorted((float(r["value"]), r["mean"]) for r in summary if r["benchmark"] == b)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=markers[i % len(markers)], label=b)
    ax.set_xlabel(_LABELS.get(param, param))
    ax.set_ylabel("computable task bits per user" if metric == "capacity" else "total energy (J)")
    if metric == "energy":
        ax.set_yscale("log")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_traces(mean_traces, path):
    """Seed-averaged objective against outer iteration, one line per M."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    for M in sorted(mean_traces):
        tr = mean_traces[M]
        ax.plot(range(len(tr)), tr, marker="o", ms=3, label=f"M = {M}")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("total energy (J)")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)
    return path
