"""Matplotlib figure output for the report paths.

Figures are rendered headless (Agg) next to the delimited outputs so a
run leaves both machine-readable tables and something to look at.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_report_figure(report, out_path):
    """Bar chart per metric across the optimization stages."""
    names = [r.stage_name for r in report.rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    axes[0].bar(names, [r.polygons / 1e6 for r in report.rows], color="#4878cf")
    axes[0].set_ylabel("polygons [million]")
    axes[1].bar(names, [r.drawcalls for r in report.rows], color="#ee854a")
    axes[1].set_ylabel("drawcalls")
    fps = [r.estimated_fps for r in report.rows]
    if any(v is not None for v in fps):
        axes[2].bar(names, [0.0 if v is None else v for v in fps], color="#6acc65")
        axes[2].set_ylabel("estimated fps")
    else:
        axes[2].text(0.5, 0.5, "no cost model", ha="center", va="center",
                     transform=axes[2].transAxes)
        axes[2].set_axis_off()
    for ax in axes[:2]:
        ax.tick_params(axis="x", labelrotation=15)
    axes[2].tick_params(axis="x", labelrotation=15)
    fig.suptitle("Scene optimization stages")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_metrics_figure(frames, budget, out_path):
    """Frame time and drawcalls along the simulated path, with the
    budget thresholds drawn in."""
    t = [fm.time_secs for fm in frames]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    ax1.plot(t, [fm.frame_time_secs * 1e3 for fm in frames], color="#4878cf")
    if budget is not None:
        ax1.axhline(1e3 / budget.min_fps, color="#d65f5f", linestyle="--",
                    label=f"{budget.min_fps:g} fps budget")
        ax1.legend(loc="upper right")
    ax1.set_ylabel("frame time [ms]")
    ax2.plot(t, [fm.drawcalls for fm in frames], color="#ee854a")
    if budget is not None:
        ax2.axhline(budget.drawcall_range[1], color="#d65f5f", linestyle="--",
                    label=f"{budget.drawcall_range[1]} drawcalls")
        ax2.legend(loc="upper right")
    ax2.set_ylabel("drawcalls")
    ax2.set_xlabel("path time [s]")
    fig.suptitle("Simulated frame budget along camera path")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
