"""Render benchmark and sweep results as line figures next to the CSV."""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_bench_figure(rows: list[dict], out_path) -> Path:
    """Mean time per mode over n, one line per mode."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    modes = []
    for row in rows:
        if row["mode"] not in modes:
            modes.append(row["mode"])
    for mode in modes:
        points = sorted(
            (int(r["n"]), float(r["mean_ns"])) for r in rows if r["mode"] == mode
        )
        ax.plot(
            [p[0] for p in points],
            [p[1] / 1e6 for p in points],
            marker="o",
            label=mode,
        )
    ax.set_xlabel("number of contextual values / layers (n)")
    ax.set_ylabel("mean time per run [ms]")
    ax.set_title("Activation strategies, mean over runs")
    ax.legend()
    ax.grid(True, alpha=0.3)
    out = Path(out_path)
    fig.savefig(out, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out


def render_sweep_figure(rows: list[dict], out_path) -> Path:
    """Reply rate against sync interval, one line per offered rate."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))

    def interval_key(row):
        ms = row["sync_ms"]
        return float("inf") if ms in ("off", -1, "-1") else float(ms)

    rates = sorted({float(r["offered_rate"]) for r in rows})
    for rate in rates:
        points = sorted(
            (interval_key(r), float(r["reply_rate"]))
            for r in rows
            if float(r["offered_rate"]) == rate
        )
        labels = [("off" if x == float("inf") else f"{x:g}") for x, _ in points]
        xs = list(range(len(points)))
        ax.plot(xs, [p[1] for p in points], marker="o", label=f"{rate:g} req/s offered")
        ax.set_xticks(xs, labels)
    ax.set_xlabel("sync interval [ms]")
    ax.set_ylabel("replies per second")
    ax.set_title("Reply rate vs. sync interval")
    ax.legend()
    ax.grid(True, alpha=0.3)
    out = Path(out_path)
    fig.savefig(out, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out
