"""Figure rendering for the CLI report path.

Every figure is written next to its CSV so a run directory is
self-contained. Rendering is best-effort presentation; the CSVs stay the
canonical output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_search_report(results, path) -> None:
    """Per-run best accuracy with the mean as a horizontal line."""
    runs = [r.run_index for r in results]
    accs = [r.best_acc for r in results]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(runs, accs, "o", ms=4, alpha=0.8, label="per-run best")
    mean = sum(accs) / len(accs)
    ax.axhline(mean, color="crimson", lw=1.2, label=f"mean = {mean:.4f}")
    ax.set_xlabel("run index")
    ax.set_ylabel("best ground-truth accuracy")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep(rows, path) -> None:
    """Mean +- std best accuracy against total trained-sample budget."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in sorted({r.mode for r in rows}):
        sub = [r for r in rows if r.mode == mode]
        x = [r.total_budget for r in sub]
        y = [r.mean_best_acc for r in sub]
        err = [r.std_best_acc for r in sub]
        ax.errorbar(x, y, yerr=err, marker="o", ms=4, capsize=3, label=mode)
    ax.set_xlabel("trained samples (N + K)")
    ax.set_ylabel("mean best accuracy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_correlation(x, y, report, path,
                       xlabel="prior-knowledge score",
                       ylabel="final accuracy") -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(x, y, s=6, alpha=0.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(f"{report.metric}  "
                 f"tau={report.kendall_tau:.3f}  rho={report.spearman_rho:.3f}",
                 fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_distribution(rows, path) -> None:
    """FLOPs vs accuracy scatter for one store/dataset."""
    flops = [r[1] for r in rows]
    accs = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(flops, accs, s=6, alpha=0.4)
    ax.set_xlabel("MFLOPs")
    ax.set_ylabel("final accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
