"""Static SVG figures of experiment results (MSE in dB against the sweep)."""
from __future__ import annotations

import math
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# horizontal references: standard errors of 1 cm / 0.1 cm, 1 Hz / 0.1 Hz,
# and phase errors one or two orders below a full cycle
REFERENCE_LINES = {
    "mse_rho_m2": [(0.01**2, "1 cm"), (0.001**2, "0.1 cm")],
    "mse_fd_Hz2": [(1.0, "1 Hz"), (0.01, "0.1 Hz")],
    "mse_phase_rad2": [((2 * math.pi / 10) ** 2, "(2π/10)²"),
                       ((2 * math.pi / 100) ** 2, "(2π/100)²")],
}
YLABELS = {
    "mse_rho_m2": "MSE(ρ) [dB m²]",
    "mse_fd_Hz2": "MSE(f_d) [dB Hz²]",
    "mse_phase_rad2": "MSE(φ_S) [dB rad²]",
    "mse_alpha": "MSE [dB]",
    "mse_gamma": "MSE [dB]",
}
STYLE = {"PCP": dict(marker="o", color="tab:blue"),
         "LGS": dict(marker="s", color="tab:orange"),
         "GGS": dict(marker="o", color="tab:blue"),
         "CRLB": dict(linestyle="--", color="k"),
         "plateau": dict(linestyle=":", color="tab:red")}


def _db(v):
    return 10 * math.log10(v) if v > 0 else float("nan")


def plot_rows(rows, path, title=None):
    """Write an SVG with one panel per metric; returns False if nothing to plot."""
    series = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if not r.metric.startswith("mse_"):
            continue
        try:
            x = float(r.sweep_value)
        except (TypeError, ValueError):
            continue
        series[(r.sweep_name, r.metric)][r.estimator].append((x, _db(r.value)))
    if not series:
        return _plot_other(rows, path, title)

    plt.rcParams["svg.hashsalt"] = "sawtooth-sync"
    keys = sorted(series)
    fig, axes = plt.subplots(len(keys), 1, figsize=(6.4, 3.2 * len(keys)), squeeze=False)
    for ax, key in zip(axes[:, 0], keys):
        sweep_name, metric = key
        for est, pts in sorted(series[key].items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label=est,
                    **STYLE.get(est, {}))
        for val, lab in REFERENCE_LINES.get(metric, []):
            ax.axhline(_db(val), color="gray", linestyle="-.", linewidth=0.8)
            ax.annotate(lab, (1.0, _db(val)), xycoords=("axes fraction", "data"),
                        fontsize=7, ha="right", va="bottom", color="gray")
        ax.set_xlabel(sweep_name)
        ax.set_ylabel(YLABELS.get(metric, metric + " [dB]"))
        ax.grid(True, which="both", linestyle=":", alpha=0.5)
        ax.legend(fontsize=8)
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True


def _plot_other(rows, path, title):
    """Fallback for experiments whose metrics are not MSEs."""
    vals = [(r.estimator, r.metric, r.value) for r in rows if r.sweep_name != "summary"]
    if not vals:
        return False
    plt.rcParams["svg.hashsalt"] = "sawtooth-sync"
    groups = defaultdict(list)
    for est, metric, v in vals:
        groups[(est, metric)].append(v)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for (est, metric), v in sorted(groups.items()):
        ax.plot(range(len(v)), v, ".", markersize=3, label=f"{est} {metric}")
    ax.set_yscale("symlog", linthresh=1e-20)
    ax.set_xlabel("index")
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True
