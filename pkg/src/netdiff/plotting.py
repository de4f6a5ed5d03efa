"""Static figures written next to the CSV outputs.

PNG metadata is pinned so repeated runs give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}
METHOD_LABELS = {"na": "non-aggregated", "2m": "two-moment"}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def scatter_plot(path, results, theta0, methods) -> None:
    """One panel per method: (p_hat, q_hat) per run, truth marked."""
    fig, axes = plt.subplots(1, len(methods), figsize=(4.5 * len(methods), 4.2), squeeze=False)
    for ax, method in zip(axes[0], methods):
        pts = np.array([(r.p_hat, r.q_hat) for r in results
                        if r.method == method and r.error is None])
        if len(pts):
            ax.scatter(pts[:, 0], pts[:, 1], s=14, alpha=0.7)
        ax.axvline(theta0[0], color="grey", lw=0.8)
        ax.axhline(theta0[1], color="grey", lw=0.8)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("p estimate")
        ax.set_ylabel("q estimate")
        ax.set_title(METHOD_LABELS.get(method, method))
    fig.tight_layout()
    _save(fig, path)


def surface_plot(path, rows, method: str) -> None:
    """Filled contour of an exported ``(p, q, Q)`` surface."""
    arr = np.asarray(rows, dtype=float)
    ps = np.unique(arr[:, 0])
    qs = np.unique(arr[:, 1])
    Z = arr[:, 2].reshape(len(ps), len(qs)).T  # rows are p-major
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    if len(ps) > 1 and len(qs) > 1:
        cs = ax.contourf(ps, qs, Z, levels=30)
        fig.colorbar(cs, ax=ax, label="objective")
    k = int(np.argmin(arr[:, 2]))
    ax.plot(arr[k, 0], arr[k, 1], "r+", ms=10)
    ax.set_xlabel("p")
    ax.set_ylabel("q")
    ax.set_title(METHOD_LABELS.get(method, method))
    fig.tight_layout()
    _save(fig, path)
