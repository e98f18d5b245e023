"""Microbenchmarks for the four activation strategies.

Four modes time what it costs to bring context up to date, from cheapest to
most expensive: switching plain named layers (`activate`), toggling
contextual values (`activate_cv`), an in-memory sync of every value
(`sync`), and a sync that re-parses the file through a fresh handle every
iteration (`reload`).

The shared fixture scales with `n`: n one-placeholder consumer values driven
by n plain layers, two banks of reactor values driven by the consumers'
layers, and a pool of passive values that only a full sync walks.  Plain
layer switches touch one dependent each, value activations fan out to both
reactor banks, and sync recalculates everything; that graded dependent set
is exactly the cost difference the modes are meant to expose.  Each
iteration ends with one probe read so the measured loop has an observable
effect.
"""

from __future__ import annotations

import gc
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .runtime import Context, build_context
from .store import StoreHandle

MODES = ("activate", "activate_cv", "sync", "reload")

# bumped once per iteration so tests can assert the probe read is not skipped
read_effects = 0
_read_sink = 0


@dataclass(frozen=True)
class BenchSpec:
    mode: str
    n: int
    iters: int = 1000
    runs: int = 11

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.runs < 1 or self.runs % 2 == 0:
            raise ValueError("runs must be a positive odd number")


@dataclass
class BenchResult:
    spec: BenchSpec
    durations_ns: list[int] = field(default_factory=list)

    @property
    def mean_ns(self) -> float:
        return statistics.fmean(self.durations_ns)

    @property
    def median_ns(self) -> float:
        return statistics.median(self.durations_ns)

    @property
    def stddev_ns(self) -> float:
        if len(self.durations_ns) < 2:
            return 0.0
        return statistics.stdev(self.durations_ns)


def fixture_text(n: int) -> str:
    """Spec/config fixture: n consumers, 2n reactors, 2n passive values."""
    lines = ["[probe]", "probe = ready"]
    for i in range(n):
        lines += [
            f"[c{i}/%p{i}%]",
            f"c{i}/* = off",
            f"c{i}/on = on",
            f"[d{i}/%c{i}%]",
            f"d{i}/* = quiet",
            f"d{i}/off = calm",
            f"d{i}/on = loud",
            f"[e{i}/%c{i}%]",
            f"e{i}/* = dim",
            f"e{i}/off = dark",
            f"e{i}/on = bright",
            f"[za{i}/%frozen%]",
            f"za{i}/* = idle",
            f"[zb{i}/%frozen%]",
            f"zb{i}/* = idle",
        ]
    return "\n".join(lines) + "\n"


def _build(n: int, tmp: Path) -> tuple[StoreHandle, Context]:
    path = tmp / "bench.ecf"
    path.write_text(fixture_text(n), encoding="utf-8")
    handle = StoreHandle(path)
    store, _ = handle.get()
    return handle, build_context(store)


def _probe_read(ctx: Context) -> None:
    global read_effects, _read_sink
    _read_sink = ctx.cv("probe").read()
    read_effects += 1


def _make_iteration(spec: BenchSpec, handle: StoreHandle, ctx: Context):
    n = spec.n
    if spec.mode == "activate":
        plain = [f"p{i}" for i in range(n)]

        def iteration():
            for name in plain:
                ctx.activate_layer(name, "on")
            for name in plain:
                ctx.deactivate_layer(name)
            _probe_read(ctx)

        return iteration

    if spec.mode == "activate_cv":
        consumers = [ctx.cv(f"c{i}") for i in range(n)]

        def iteration():
            for cv in consumers:
                ctx.activate(cv)
            for cv in consumers:
                ctx.deactivate(cv)
            _probe_read(ctx)

        return iteration

    # sync and reload refresh a fully activated context
    for i in range(n):
        ctx.activate(ctx.cv(f"c{i}"))
        ctx.activate(ctx.cv(f"d{i}"))
        ctx.activate(ctx.cv(f"e{i}"))

    if spec.mode == "sync":

        def iteration():
            ctx.sync(handle)
            _probe_read(ctx)

        return iteration

    path = handle.path

    def iteration():
        # a fresh handle per iteration defeats the unchanged-file fast path,
        # so the file really is re-parsed
        ctx.sync(StoreHandle(path))
        _probe_read(ctx)

    return iteration


def run(spec: BenchSpec) -> BenchResult:
    """Time `spec.iters` iterations, `spec.runs` times, on a fresh fixture."""
    result = BenchResult(spec)
    with tempfile.TemporaryDirectory(prefix="ctxval-bench-") as tmp:
        handle, ctx = _build(spec.n, Path(tmp))
        iteration = _make_iteration(spec, handle, ctx)
        for _ in range(min(spec.iters, 100)):
            iteration()  # warmup; statistics cover recorded runs only
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            for _ in range(spec.runs):
                start = time.perf_counter_ns()
                for _ in range(spec.iters):
                    iteration()
                result.durations_ns.append(time.perf_counter_ns() - start)
        finally:
            if gc_was_enabled:
                gc.enable()
    return result


CSV_HEADER = "mode,n,iters,mean_ns,stddev_ns,runs"


def csv_row(result: BenchResult) -> str:
    s = result.spec
    return (
        f"{s.mode},{s.n},{s.iters},{result.mean_ns:.0f},"
        f"{result.stddev_ns:.0f},{s.runs}"
    )


def fit_line(xs: list[float], ys: list[float]) -> tuple[float, float, float]:
    """Least squares fit; returns (slope, intercept, r_squared)."""
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r_squared
