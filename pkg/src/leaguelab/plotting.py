"""Report figures: metric curves, the behaviour archive, Nash weights, ratings."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 4.3),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_metrics(metrics: list, out_dir: Path) -> Path:
    at = [m["at"] for m in metrics]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
        ax = axes[0, 0]
        ax.plot(at, [m["rating_mean"] for m in metrics], label="mean")
        ax.fill_between(at, [m["rating_min"] for m in metrics], [m["rating_max"] for m in metrics],
                        alpha=0.25, label="min to max")
        ax.set_ylabel("Elo rating (active)")
        ax.legend()
        ax = axes[0, 1]
        ax.plot(at, [m["exploitability"] for m in metrics], label="Nash mixture")
        ax.plot(at, [m["mean_policy_exploitability"] for m in metrics], label="mean policy", alpha=0.7)
        ax.set_ylabel("exploitability")
        ax.set_yscale("symlog", linthresh=1e-2)
        ax.legend()
        ax = axes[1, 0]
        ax.plot(at, [m["coverage"] for m in metrics])
        ax.set_ylabel("archive coverage")
        ax.set_xlabel("scheduling units")
        ax = axes[1, 1]
        ax.plot(at, [m["qd_score"] for m in metrics])
        ax.set_ylabel("qd_score")
        ax.set_xlabel("scheduling units")
        return _save(fig, out_dir / "metrics.png")


def plot_archive(records: list, R: int, out_dir: Path) -> Path:
    """Occupied cells; 3-d descriptors are drawn on the simplex, others as a ranked bar chart."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if not records:
            ax.text(0.5, 0.5, "archive empty", ha="center", va="center", transform=ax.transAxes)
        elif len(records[0]["cell"]) == 3:
            cells = np.array([r["cell"] for r in records], dtype=float) + 0.5
            cells /= cells.sum(axis=1, keepdims=True)
            # barycentric -> planar, corners at strategy 0, 1, 2
            x = cells[:, 1] + 0.5 * cells[:, 2]
            y = np.sqrt(3) / 2 * cells[:, 2]
            sc = ax.scatter(x, y, c=[r["quality"] for r in records], cmap="viridis", s=40, marker="h")
            ax.plot([0, 1, 0.5, 0], [0, 0, np.sqrt(3) / 2, 0], color="0.4", lw=0.8)
            ax.set_aspect("equal")
            ax.set_axis_off()
            fig.colorbar(sc, ax=ax, label="quality (Elo)")
        else:
            q = np.sort([r["quality"] for r in records])[::-1]
            ax.bar(np.arange(len(q)), q, width=1.0)
            ax.set_xlabel("occupied cell (ranked)")
            ax.set_ylabel("quality (Elo)")
        ax.set_title(f"behaviour archive: {len(records)} cells, R = {R}")
        return _save(fig, out_dir / "archive.png")


def plot_nash(nash: dict, out_dir: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if nash.get("probs") is None:
            ax.text(0.5, 0.5, nash.get("warning") or "no Nash distribution", ha="center", va="center",
                    transform=ax.transAxes, wrap=True)
        else:
            probs = np.array(nash["probs"])
            order = np.argsort(probs)[::-1][:30]
            ax.bar(range(len(order)), probs[order])
            ax.set_xticks(range(len(order)))
            ax.set_xticklabels([nash["ids"][i] for i in order], rotation=90, fontsize=7)
            ax.axhline(nash["theta"], color="C3", lw=0.8, ls="--", label="support threshold")
            ax.set_ylabel("Nash weight")
            ax.legend()
        return _save(fig, out_dir / "nash.png")


def plot_ratings(agents: list, out_dir: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        active = [a["rating"] for a in agents if a["active"]]
        hall = [a["rating"] for a in agents if not a["active"]]
        bins = np.histogram_bin_edges(active + hall or [0.0], bins=30)
        if hall:
            ax.hist(hall, bins=bins, alpha=0.6, label="hall of fame")
        ax.hist(active, bins=bins, alpha=0.8, label="active")
        ax.set_xlabel("Elo rating")
        ax.set_ylabel("agents")
        ax.legend()
        return _save(fig, out_dir / "ratings.png")
