"""Report figures. Written next to the --out file as <stem>_<name>.png."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ExportError  # noqa: E402

_PNG_META = {"Software": None}


def figure_path(out, name: str) -> Path:
    out = Path(out)
    return out.with_name(f"{out.stem}_{name}.png")


def _save(fig, path):
    try:
        fig.savefig(path, dpi=110, metadata=_PNG_META)
    except OSError as err:
        raise ExportError(f"cannot write figure {path}: {err}") from None
    finally:
        plt.close(fig)
    return str(path)


def plot_continuity(ladder, rho, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(ladder, np.maximum(rho, 1e-16), "o-")
    ax.set_xlabel("eps")
    ax.set_ylabel("rho_K(eps)")
    ax.set_title("Hausdorff gap between H_eps and H")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_cloud(points, path, band=None, title="value cloud"):
    points = np.asarray(points, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    if points.ndim == 2 and points.shape[1] >= 2:
        ax.scatter(points[:, 0], points[:, 1], s=10, label="cloud")
        if band:
            b = np.array([e["payoff"] for e in band])
            ax.scatter(b[:, 0], b[:, 1], marker="x", s=40, color="C3", label="certified payoff")
        ax.set_xlabel("y1")
        ax.set_ylabel("y2")
        ax.legend(loc="best")
    else:
        vals = points.reshape(-1)
        ax.plot(vals, np.zeros_like(vals), "o")
        ax.set_xlabel("y1")
        ax.set_yticks([])
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_profile(x, u, path, labels=None):
    u = np.asarray(u, dtype=float).reshape(len(x), -1)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for i in range(u.shape[1]):
        ax.plot(x, u[:, i], label=labels[i] if labels else f"u{i + 1}(0, x)")
    ax.set_xlabel("x")
    ax.legend(loc="best")
    ax.set_title("value at t = 0")
    fig.tight_layout()
    return _save(fig, path)


def plot_isaacs(z, supinf, infsup, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(z, supinf, "o-", label="sup inf h1")
    ax.plot(z, infsup, "s--", label="inf sup h1")
    ax.set_xlabel("z1")
    ax.legend(loc="best")
    ax.set_title("Isaacs check")
    fig.tight_layout()
    return _save(fig, path)
