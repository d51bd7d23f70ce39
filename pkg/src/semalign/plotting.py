"""Figures written next to the CSV/JSON outputs of the CLI."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(rows, path):
    """Mean gap vs batch size on log-log axes, one line per feature dim."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for dim in sorted({r["dim"] for r in rows}):
            sub = [r for r in rows if r["dim"] == dim]
            sizes = [r["size"] for r in sub]
            ax.errorbar(
                sizes, [r["mean_D"] for r in sub], yerr=[r["std_D"] for r in sub],
                marker="o", ms=4, capsize=2, label=f"K={dim}",
            )
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("batch size")
        ax.set_ylabel("mean gap D")
        ax.legend()
        return _save(fig, path)


def plot_history(history, path):
    """Probe-batch loss components and test recall over epochs."""
    epochs = [h["epoch"] for h in history]
    with plt.rc_context(STYLE):
        fig, (ax_l, ax_r) = plt.subplots(1, 2, figsize=(10, 4))
        for key in ("l_total", "l_cl", "l_mkmmd", "l_sdd", "l_ssl_u", "l_ssl_v"):
            ys = [h[key] for h in history]
            if any(y != 0 for y in ys):
                ax_l.plot(epochs, ys, marker=".", label=key[2:])
        ax_l.set_xlabel("epoch")
        ax_l.set_ylabel("probe loss")
        ax_l.legend()
        recall_keys = sorted(k for k in history[0] if k.startswith("recall@"))
        for key in recall_keys:
            ax_r.plot(epochs, [h[key] for h in history], marker=".", label=key)
        ax_r.set_xlabel("epoch")
        ax_r.set_ylabel("test recall")
        ax_r.set_ylim(0, 1)
        if recall_keys:
            ax_r.legend()
        return _save(fig, path)


def plot_recall(report, path):
    """Bar chart of recall@k for both retrieval directions."""
    ks = sorted({int(k.split("@")[1].split("_")[0]) for k in report if k.startswith("recall@")})
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        width = 0.38
        xs = range(len(ks))
        for off, direction in ((-width / 2, "a2b"), (width / 2, "b2a")):
            ax.bar([x + off for x in xs], [report[f"recall@{k}_{direction}"] for k in ks],
                   width, label=direction)
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"R@{k}" for k in ks])
        ax.set_ylim(0, 1)
        ax.legend()
        return _save(fig, path)
