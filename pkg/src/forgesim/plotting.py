"""Report figures rendered to files (Agg backend, no display needed)."""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REPORT_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 110,
    "savefig.bbox": "tight",
}

KIND_COLORS = {"real": "#4c72b0", "blueprint": "#dd8452", "social": "#55a868"}


def new(nrows: int = 1, ncols: int = 1, scale: float = 1.0):
    with plt.rc_context(REPORT_RC):
        return plt.subplots(nrows, ncols, figsize=(6.0 * scale, 3.6 * scale))


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(REPORT_RC):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_threshold_trace(rows: Sequence, path: str | Path, *, window: int = 500) -> Path:
    """Threshold in force per candidate, with a rolling acceptance rate on a twin axis."""
    fig, ax = new()
    n = [r.n_seen for r in rows]
    tau = [float(r.tau) for r in rows]
    ax.step(n, tau, where="post", color="#c44e52", lw=1.2, label="threshold")
    warm = [r.n_seen for r in rows if r.phase.value == "warmup"]
    if warm:
        ax.axvspan(0, max(warm), color="0.9", lw=0, label="warm-up")
    ax.set_xlabel("candidates seen")
    ax.set_ylabel("threshold")
    ax.set_ylim(0, 1)
    accepted = [1.0 if r.decision.value == "accept" else 0.0 for r in rows]
    if accepted:
        w = max(1, min(window, len(accepted)))
        rate, acc = [], 0.0
        for i, a in enumerate(accepted):
            acc += a
            if i >= w:
                acc -= accepted[i - w]
            rate.append(acc / min(i + 1, w))
        ax2 = ax.twinx()
        ax2.plot(n, rate, color="#4c72b0", lw=0.8, alpha=0.8, label=f"acceptance (rolling {w})")
        ax2.set_ylabel("acceptance rate")
        ax2.set_ylim(0, 1)
        ax2.spines["right"].set_visible(True)
        lines = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
        ax.legend(lines, [ln.get_label() for ln in lines], loc="lower right", frameon=False)
    return save(fig, path)


def plot_label_breakdown(samples: Sequence, path: str | Path) -> Path:
    """Stacked bars of consistency labels per sample kind."""
    counts = Counter((s.kind, s.delta) for s in samples)
    kinds = [k for k in ("real", "blueprint", "social") if counts[(k, 0)] + counts[(k, 1)]]
    fig, ax = new(scale=0.8)
    agree = [counts[(k, 1)] for k in kinds]
    mismatch = [counts[(k, 0)] for k in kinds]
    ax.bar(kinds, agree, color="#55a868", label="delta=1 (consistent)")
    ax.bar(kinds, mismatch, bottom=agree, color="#c44e52", label="delta=0 (mismatch)")
    ax.set_ylabel("samples")
    ax.legend(frameon=False)
    return save(fig, path)


def plot_role_events(role_counts: dict[str, Counter], path: str | Path) -> Path:
    """Per-role event counts split by stance."""
    roles = list(role_counts)
    stances = ("asserts_real", "asserts_fake", "neutral")
    colors = {"asserts_real": "#dd8452", "asserts_fake": "#c44e52", "neutral": "0.6"}
    fig, ax = new(scale=0.9)
    bottom = [0] * len(roles)
    for st in stances:
        vals = [role_counts[r][st] for r in roles]
        ax.bar(roles, vals, bottom=bottom, color=colors[st], label=st)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_ylabel("events")
    ax.legend(frameon=False)
    return save(fig, path)
