"""Optional PNG rendering of solve output; only used with ``--figures``."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def schedule_figure(sched: dict, path, title: str = "") -> Path:
    """Stacked per-slot aggregates read back from a schedule CSV."""
    plt = _pyplot()
    t = sched["t"]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    w = 0.27
    ax.bar(t - w, sched["P_G"], w, label="generation")
    ax.bar(t, sched["P_D"], w, label="utility load")
    ax.bar(t + w, sched["P_B"], w, label="storage")
    ax.plot(t, sched["net_load"], "k.-", label="net load")
    ax.axhline(0.0, color="0.5", lw=0.6)
    ax.set_xlabel("slot")
    ax.set_ylabel("power (kW)")
    ax.set_xticks(t)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def cost_figure(rows: list, ps, path) -> Path:
    """Recovered cost against p, one line per sample size, SAA as dashes."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for i, r in enumerate(rows):
        y = [r[f"p={p:g}"] for p in ps]
        line, = ax.plot(ps, y, "o-", label=f"N_s={r['N_s']}")
        ax.axhline(r["SAA"], color=line.get_color(), ls="--", lw=0.8)
    ax.set_xlabel("p")
    ax.set_ylabel("net cost ($)")
    ax.set_xticks(np.asarray(ps, dtype=float))
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
