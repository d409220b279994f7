"""Figure rendering for simulation and benchmark reports.

Everything draws through the Agg canvas so runs work headless; each
function returns the list of files it wrote.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first
import numpy as np  # noqa: E402

from .profiling import STAGES  # noqa: E402

DPI = 150

OBSERVABLES_FIGURE = "observables_timeseries.png"
POPULATIONS_FIGURE = "populations_heatmap.png"
BENCHMARK_SCALING_FIGURE = "benchmark_scaling.png"
BENCHMARK_STAGES_FIGURE = "benchmark_stages.png"

# scalar series drawn in the timeseries panels, in display order
_SCALAR_SERIES = (
    ("purity", "purity"),
    ("participation_ratio", "participation ratio"),
    ("position_mean", "mean position"),
    ("position_variance", "position variance"),
)


def _collect_series(rows):
    """Group (time, name, index, value) rows by observable name."""
    series: dict[str, dict[int, list[tuple[float, float]]]] = {}
    for time_tag, name, idx, value in rows:
        series.setdefault(name, {}).setdefault(idx, []).append((time_tag, value))
    return series


def render_observables(rows, out_dir) -> list[Path]:
    """Draw observable trajectories collected by a run.

    Produces a panel figure for the scalar series that are present and,
    when site populations were collected, a site-by-time heat map.
    """
    out_dir = Path(out_dir)
    series = _collect_series(rows)
    written: list[Path] = []

    panels = [
        (name, label) for name, label in _SCALAR_SERIES if name in series
    ]
    if panels:
        fig, axes = plt.subplots(
            len(panels), 1, figsize=(7.0, 2.2 * len(panels)),
            sharex=True, squeeze=False,
        )
        for ax, (name, label) in zip(axes[:, 0], panels):
            for idx in sorted(series[name]):
                points = series[name][idx]
                times = [p[0] for p in points]
                values = [p[1] for p in points]
                # the index separates particles for position statistics
                suffix = f" (particle {idx})" if len(series[name]) > 1 else ""
                ax.plot(times, values, lw=1.2, label=label + suffix)
            ax.set_ylabel(label)
            if len(series[name]) > 1:
                ax.legend(fontsize=8)
            ax.grid(alpha=0.3)
        axes[-1, 0].set_xlabel("time")
        fig.suptitle("ensemble observables")
        fig.tight_layout()
        path = out_dir / OBSERVABLES_FIGURE
        fig.savefig(path, dpi=DPI)
        plt.close(fig)
        written.append(path)

    if "population" in series:
        pops = series["population"]
        sites = sorted(pops)
        times = sorted({t for points in pops.values() for t, _ in points})
        time_index = {t: col for col, t in enumerate(times)}
        grid = np.zeros((len(sites), len(times)))
        for row, site in enumerate(sites):
            for t, value in pops[site]:
                grid[row, time_index[t]] = value
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        extent = None
        if len(times) > 1:
            extent = (times[0], times[-1], sites[0] - 0.5, sites[-1] + 0.5)
        image = ax.imshow(
            grid, aspect="auto", origin="lower", extent=extent,
            interpolation="nearest", cmap="viridis",
        )
        ax.set_xlabel("time" if len(times) > 1 else "collection")
        ax.set_ylabel("site index")
        ax.set_title("expected site occupation")
        fig.colorbar(image, ax=ax, label="particles")
        fig.tight_layout()
        path = out_dir / POPULATIONS_FIGURE
        fig.savefig(path, dpi=DPI)
        plt.close(fig)
        written.append(path)

    return written


def render_benchmark(records, out_dir) -> list[Path]:
    """Draw total-time scaling and per-stage shares for a benchmark sweep."""
    out_dir = Path(out_dir)
    written: list[Path] = []
    if not records:
        return written

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    post_rates = sorted({r["post_rate"] for r in records})
    for post_rate in post_rates:
        sweep = [r for r in records if r["post_rate"] == post_rate]
        by_dim: dict[int, list[float]] = {}
        for record in sweep:
            by_dim.setdefault(record["joint_dim"], []).append(
                record["total_seconds"]
            )
        dims = sorted(by_dim)
        totals = [float(np.mean(by_dim[d])) for d in dims]
        ax.plot(
            dims, totals, marker="o",
            label=f"collect every {post_rate} steps",
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("joint dimension")
    ax.set_ylabel("total seconds")
    ax.set_title("run time against problem size")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / BENCHMARK_SCALING_FIGURE
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7.5, 4.5))
    labels = [
        f"d={r['joint_dim']}\np={r['post_rate']} R={r['realizations']}"
        for r in records
    ]
    x = np.arange(len(records))
    bottom = np.zeros(len(records))
    for stage in STAGES:
        heights = np.array(
            [r[f"{stage}_seconds"] for r in records], dtype=float
        )
        ax.bar(x, heights, bottom=bottom, width=0.7, label=stage)
        bottom += heights
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("seconds")
    ax.set_title("stage composition per benchmark point")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / BENCHMARK_STAGES_FIGURE
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    written.append(path)

    return written
