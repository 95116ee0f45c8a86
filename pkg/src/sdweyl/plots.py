"""Figure rendering for report files.

Each report writer can drop one or two PNG figures next to the delimited
output; everything draws through the Agg backend so the CLI works headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_META = {"Software": "sdweyl"}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def residual_scatter(rows, path, xkey="r", ykey="residual", title=None):
    """Per-point residuals against a coordinate, log-scaled."""
    xs = np.array([row[xkey] for row in rows], dtype=float)
    ys = np.array([max(abs(row[ykey]), 1e-300) for row in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.semilogy(xs, ys, "o", ms=4, alpha=0.8)
    ax.set_xlabel(xkey)
    ax.set_ylabel(ykey)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def residual_bars(labels, values, path, title=None, tol=None):
    """Named residuals on a log axis, with an optional tolerance line."""
    vals = np.maximum(np.abs(np.asarray(values, dtype=float)), 1e-300)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.bar(range(len(labels)), vals, color="#46698c")
    ax.set_yscale("log")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    if tol is not None:
        ax.axhline(tol, color="#aa3333", ls="--", lw=1, label=f"tol {tol:g}")
        ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def decay_loglog(radii, series, path, title=None):
    """Log-log decay curves; `series` maps label -> (values, exponent)."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    radii = np.asarray(radii, dtype=float)
    for label, (values, exponent) in sorted(series.items()):
        vals = np.maximum(np.abs(np.asarray(values, dtype=float)), 1e-300)
        line, = ax.loglog(radii, vals, "o-", ms=3, lw=1,
                          label=f"{label} ({exponent:+.2f})")
        anchor = vals[0] * (radii / radii[0]) ** exponent
        ax.loglog(radii, anchor, "--", lw=0.8, color=line.get_color(),
                  alpha=0.5)
    ax.set_xlabel("r")
    ax.set_ylabel("norm")
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
