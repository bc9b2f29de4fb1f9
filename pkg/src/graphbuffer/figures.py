"""Matplotlib rendering for the CLI report path.

Every figure lands next to the delimited output it visualizes. The Agg
backend keeps rendering headless; no interactive state is touched.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KW = {"dpi": 130, "bbox_inches": "tight"}


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_training_curves(records: list[dict], path) -> None:
    """Loss components and validation accuracy over epochs."""
    epochs = [r["epoch"] for r in records]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.4))
    for key, label in (("train_loss", "total"), ("bias_term", "bias"),
                       ("robust_term", "robustness")):
        ys = [(r["epoch"], r[key]) for r in records if r.get(key) is not None]
        if ys:
            ax_loss.plot([e for e, _ in ys], [v for _, v in ys], label=label, lw=1.2)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(frameon=False, fontsize=8)

    ax_acc.plot(epochs, [r["val_acc"] for r in records], color="tab:green", lw=1.2,
                label="validation")
    if any("test_robust" in r for r in records):
        twin = ax_acc.twinx()
        ys = [(r["epoch"], r["test_robust"]) for r in records if r.get("test_robust") is not None]
        twin.plot([e for e, _ in ys], [v for _, v in ys], color="tab:red", lw=1.0,
                  label="test robustness")
        twin.set_ylabel("test robustness term")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.legend(frameon=False, fontsize=8, loc="lower right")
    fig.tight_layout()
    _finish(fig, path)


def render_removal_curve(sweeps: dict[str, dict[float, dict]], path) -> None:
    """Accuracy vs kept-edge ratio, one line per model tag, std as error bars."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for tag, sweep in sweeps.items():
        ratios = sorted(sweep.keys())
        means = [sweep[r]["mean"] for r in ratios]
        stds = [sweep[r]["std"] for r in ratios]
        ax.errorbar(ratios, means, yerr=stds, marker="o", ms=3, lw=1.2,
                    capsize=2, label=tag)
    ax.set_xlabel("fraction of edges kept")
    ax.set_ylabel("test accuracy")
    ax.invert_xaxis()
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _finish(fig, path)


def render_bound_ratios(reports: list[dict], path) -> None:
    """Worst observed LHS/RHS ratio per verified bound; 1.0 is the ceiling."""
    fig, ax = plt.subplots(figsize=(6, 3.4))
    labels = [f"{r['arch']}" + (f"/{r['scheme']}" if r.get("scheme") else "")
              for r in reports]
    ratios = [r["max_ratio"] for r in reports]
    ax.bar(range(len(reports)), ratios, color="tab:blue", width=0.6)
    ax.axhline(1.0, color="tab:red", lw=1.0, ls="--")
    ax.set_xticks(range(len(reports)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("max observed ratio")
    ax.set_ylim(0, max(1.05, max(ratios) * 1.1 if ratios else 1.05))
    fig.tight_layout()
    _finish(fig, path)
