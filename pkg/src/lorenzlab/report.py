"""Render figures from a run directory's delimited outputs.

Every figure is derived purely from the CSV/JSON files an experiment wrote,
so `lorenzlab report <dir>` can (re)build the visual summary of any archived
run.  PNG metadata is pinned to keep renders reproducible.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runio import read_csv  # noqa: E402

_SAVE_KW = dict(dpi=130, metadata={"Software": "lorenzlab"})


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def _fig_trajectory(csv_path: Path) -> Path:
    _, data, _ = read_csv(csv_path)
    t, x, y, z = data[:, 0], data[:, 1], data[:, 2], data[:, 3]
    fig = plt.figure(figsize=(9, 3.2))
    ax = fig.add_subplot(1, 3, 1)
    ax.plot(x, z, lw=0.3)
    ax.set_xlabel("x"); ax.set_ylabel("z")
    ax = fig.add_subplot(1, 3, 2)
    ax.plot(x, y, lw=0.3)
    ax.set_xlabel("x"); ax.set_ylabel("y")
    ax = fig.add_subplot(1, 3, 3)
    ax.plot(t, z, lw=0.5)
    ax.set_xlabel("t"); ax.set_ylabel("z")
    fig.suptitle("trajectory")
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_events(csv_path: Path) -> Path:
    _, data, _ = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(data[:, 1], data[:, 2], s=2)
    ax.set_xlabel("x"); ax.set_ylabel("y")
    ax.set_title(f"section events (n={len(data)})")
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_histogram(csv_path: Path) -> Path:
    header, data, _ = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(header) == 2:
        ax.step(data[:, 0], data[:, 1], where="post", lw=0.8)
        ax.set_xlabel("bin"); ax.set_ylabel("mass")
    else:
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        grid = data[:, -1].reshape(len(xs), len(ys))
        pc = ax.pcolormesh(xs, ys, grid.T, shading="auto")
        fig.colorbar(pc, ax=ax, label="mass")
        ax.set_xlabel(header[0]); ax.set_ylabel(header[1])
    ax.set_title("empirical measure")
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_lyapunov_trace(csv_path: Path) -> Path:
    header, data, _ = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in range(1, data.shape[1]):
        ax.plot(data[:, 0], data[:, k], lw=0.8, label=header[k])
    ax.set_xlabel(header[0]); ax.set_ylabel("running exponent")
    ax.legend()
    ax.set_title("Lyapunov convergence")
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_mass_curves(csv_path: Path) -> Path:
    _, data, _ = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for pid in np.unique(data[:, 0]):
        sel = data[:, 0] == pid
        ax.loglog(data[sel, 1], data[sel, 2], "o-", ms=2.5, lw=0.7)
    ax.set_xlabel("r"); ax.set_ylabel("ball mass")
    ax.set_title("local mass curves")
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_records(csv_path: Path) -> Path:
    _, data, _ = read_csv(csv_path)
    clean = data[data[:, 3] < 0.5]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(-np.log(clean[:, 1]), clean[:, 2], ".", ms=2, alpha=0.4)
    med_r = np.unique(clean[:, 1])
    med = [np.median(clean[clean[:, 1] == r, 2]) for r in med_r]
    ax.semilogy(-np.log(med_r), med, "r-o", ms=4, label="median")
    ax.set_xlabel("-log r"); ax.set_ylabel("tau")
    ax.legend()
    ax.set_title(csv_path.stem.replace("_", " "))
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_correlation(csv_path: Path) -> Path:
    _, data, _ = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    lags, vals = data[:, 0], data[:, 1]
    ax.semilogy(lags[1:], np.abs(vals[1:]), "o-", ms=3, lw=0.8)
    fitj = csv_path.parent / "correlations.json"
    if fitj.exists():
        meta = json.loads(fitj.read_text())
        ax.axhline(meta["noise_floor"], color="gray", ls="--", lw=0.8,
                   label="noise floor")
        if meta.get("fit"):
            nn = np.arange(1, meta["usable_lags"] + 1)
            ax.semilogy(nn, np.exp(meta["fit"]["intercept"]
                                   + meta["fit"]["slope"] * nn), "r-",
                        label=f"rate {meta['fit']['slope']:.3f}")
    ax.set_xlabel("lag n"); ax.set_ylabel("|C(n)|")
    ax.legend()
    ax.set_title("correlation decay")
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_decay_curve(csv_path: Path, ylabel: str) -> Path:
    _, data, _ = read_csv(csv_path)
    pos = data[:, 1] > 0
    fig, ax = plt.subplots(figsize=(5.5, 4))
    if data.shape[1] > 2:
        ax.errorbar(data[pos, 0], data[pos, 1], yerr=data[pos, 2], fmt="o",
                    ms=3, capsize=2)
    else:
        ax.plot(data[pos, 0], data[pos, 1], "o", ms=3)
    ax.set_yscale("log")
    ax.set_xlabel("horizon T"); ax.set_ylabel(ylabel)
    ax.set_title(csv_path.stem.replace("_", " "))
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


def _fig_separation(csv_path: Path) -> Path:
    _, data, _ = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    pos = data[:, 1] > 0
    ax.semilogy(data[pos, 0], data[pos, 1], lw=0.7)
    ax.set_xlabel("t"); ax.set_ylabel("separation")
    ax.set_title("sensitivity probe")
    fig.tight_layout()
    return _save(fig, csv_path.with_suffix(".png"))


_RENDERERS = {
    "trajectory.csv": _fig_trajectory,
    "events.csv": _fig_events,
    "histogram.csv": _fig_histogram,
    "lyapunov_trace.csv": _fig_lyapunov_trace,
    "mass_curves.csv": _fig_mass_curves,
    "hitting_records.csv": _fig_records,
    "recurrence_records.csv": _fig_records,
    "correlation.csv": _fig_correlation,
    "deviation_curve.csv": lambda p: _fig_decay_curve(p, "deviation fraction"),
    "escape_curve.csv": lambda p: _fig_decay_curve(p, "staying fraction"),
    "separation.csv": _fig_separation,
}


def render_run_dir(run_dir) -> list[Path]:
    """Render a figure beside every recognized CSV in the directory."""
    run_dir = Path(run_dir)
    made = []
    for name, renderer in _RENDERERS.items():
        f = run_dir / name
        if f.exists():
            made.append(renderer(f))
    return made
