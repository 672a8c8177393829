"""Static SVG figures: the privacy-utility trade-off and loss curves.

Output is byte-reproducible: the SVG hash salt is fixed and the date
metadata is dropped.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .types import TradeoffPoint  # noqa: E402

_RC = {"svg.hashsalt": "smpriv", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_tradeoff(points: Sequence[TradeoffPoint], path: str | Path) -> Path:
    """Attacker balanced accuracy against NE2, one line per (method, SI case).

    The SI-only baseline of each case is drawn as a dashed horizontal line.
    """
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        series: dict[tuple[str, str], list[TradeoffPoint]] = {}
        for p in points:
            if p.status == "ok":
                series.setdefault((p.method, p.si_case), []).append(p)
        cases = sorted({p.si_case for p in points})
        colors = {c: f"C{i}" for i, c in enumerate(cases)}
        for (method, case), pts in sorted(series.items()):
            pts = sorted(pts, key=lambda p: p.ne2)
            ax.plot([p.ne2 for p in pts], [p.attacker_balanced_accuracy for p in pts],
                    marker="o" if method == "DI" else "s", ls="-" if method == "DI" else ":",
                    color=colors[case], label=f"{method}, case {case}")
        for case in cases:
            base = next((p.si_only_baseline for p in points if p.si_case == case), math.nan)
            if math.isfinite(base):
                ax.axhline(base, color=colors[case], ls="--", lw=0.8, label=f"SI only, case {case}")
        ax.axhline(0.5, color="0.6", lw=0.6)
        ax.set_xlabel("NE2")
        ax.set_ylabel("attacker balanced accuracy")
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_loss_curves(curves: Mapping[str, Mapping[str, np.ndarray]], path: str | Path) -> Path:
    """Releaser and adversary loss against epoch, one panel each."""
    path = Path(path)
    with plt.rc_context(_RC):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
        for name, c in sorted(curves.items()):
            top.plot(c["epoch"], c["releaser_total"], lw=1, label=name)
            bottom.plot(c["epoch"], c["adversary_loss"], lw=1, label=name)
        top.set_ylabel("releaser loss")
        bottom.set_ylabel("adversary loss")
        bottom.set_xlabel("epoch")
        top.legend(fontsize=6, frameon=False)
        fig.tight_layout()
        return _save(fig, path)
