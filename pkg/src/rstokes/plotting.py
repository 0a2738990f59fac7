"""Optional PNG figures next to the CSV outputs.

matplotlib is imported lazily so the library and the CSV paths never need it.
Metadata that would embed version strings or timestamps is stripped, keeping
repeated runs byte-identical.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

_META = {"Software": None}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="png", dpi=120, metadata=_META)
    tmp.replace(path)


def plot_solution(report, path: Path, max_modes: int = 6):
    """Mode trajectories against t on a log axis (t = 0 is dropped)."""
    plt = _pyplot()
    fld = report.field
    t = fld.time_grid[1:]
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in range(min(max_modes, fld.trajectories.shape[0])):
        lam = fld.spectrum.eigenvalues[k]
        ax.plot(t, fld.trajectories[k, 1:], label=f"k={k + 1}, $\\lambda$={lam:g}")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("$T_k(t)$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_illposed(rows, path: Path):
    plt = _pyplot()
    lam = np.array([r["lambda_k"] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(lam, [r["psi_norm"] for r in rows], "o-", label="$\\|\\psi^{(k)}\\|$")
    ax.loglog(lam, [r["phi_norm"] for r in rows], "s-", label="$\\|\\varphi^{(k)}\\|$")
    ax.loglog(lam, [r["phi_lower_bound"] for r in rows], "k--", label="lower bound")
    ax.loglog(lam, [r["phi_upper_bound"] for r in rows], "k:", label="upper bound")
    ax.loglog(lam, [r["psi_norm1"] for r in rows], "^-", label="$\\|\\psi^{(k)}\\|_1$")
    ax.set_xlabel("$\\lambda_k$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
