"""`cv` command line: generate, inspect, mutate, validate, benchmark.

Exit codes: 0 success, 1 domain errors (parse failure, merge conflict,
dependency cycle, unknown key), 2 usage errors.  Every error path prints a
single `error: ...` line to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .codegen import build_model, generate
from .errors import CtxvalError
from .notify import StampFileTransport
from .runtime import build_context, evaluate, to_text
from .spec import build_dependency_graph, extract_specs, topo_order
from .store import StoreHandle

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _config_path(arg: str | None) -> Path:
    if arg is not None:
        return Path(arg)
    env = os.environ.get("CV_CONFIG")
    if env:
        return Path(env)
    raise CtxvalError("no configuration file given and CV_CONFIG is not set")


def _load(path: Path):
    handle = StoreHandle(path)
    store, _ = handle.get()
    return handle, store


def _parse_layer_flags(flags: list[str]) -> dict[str, str]:
    layers: dict[str, str] = {}
    for flag in flags:
        name, sep, value = flag.partition("=")
        if not sep or not name:
            raise CtxvalError(f"--layer expects name=value, got {flag!r}")
        layers[name] = value
    return layers


def cmd_gen(args) -> int:
    _, store = _load(_config_path(args.spec_file))
    specs = extract_specs(store)
    order = topo_order(build_dependency_graph(specs))
    for warning in order.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    manifest = generate(build_model(specs), args.out_dir)
    print(
        f"{manifest['values']} contextual values, "
        f"{len(manifest['files'])} files, {manifest['lines']} lines -> {args.out_dir}"
    )
    return EXIT_OK


def _match_spec(specs, key: str):
    for spec in specs:
        if spec.key_pattern.render() == key:
            return spec
    for spec in specs:
        if "/".join(spec.key_pattern.literal_segments()) == key:
            return spec
    for spec in specs:
        if spec.layer_name == key:
            return spec
    return None


def cmd_get(args) -> int:
    file_arg, key = (args.a, args.b) if args.b is not None else (None, args.a)
    _, store = _load(_config_path(file_arg))
    layers = _parse_layer_flags(args.layer)
    spec = _match_spec(extract_specs(store), key)
    if spec is not None:
        concrete_key, value = evaluate(spec, layers, store)
        print(f"{concrete_key} = {to_text(value)}")
        return EXIT_OK
    raw = store.lookup(key)
    if raw is not None:
        print(f"{key} = {raw}")
        return EXIT_OK
    raise CtxvalError(f"no contextual value or entry matches key {key!r}")


def cmd_set(args) -> int:
    if args.c is not None:
        file_arg, key, value = args.a, args.b, args.c
    elif args.b is not None:
        file_arg, key, value = None, args.a, args.b
    else:
        raise CtxvalError("set expects [file] key value")
    path = _config_path(file_arg)
    handle = StoreHandle(path, transport=StampFileTransport(path))
    store, _ = handle.get()
    handle.set(store.set(key, value))
    return EXIT_OK


def cmd_spec_check(args) -> int:
    _, store = _load(_config_path(args.file))
    graph = build_dependency_graph(extract_specs(store))
    order = topo_order(graph)
    print("order: " + " ".join(spec.layer_name for spec in order.specs))
    for warning in order.warnings:
        print(f"warning: {warning}")
    for name in sorted(graph.external_layers):
        print(f"external layer: {name}")
    return EXIT_OK


def cmd_layers(args) -> int:
    handle, store = _load(_config_path(args.file))
    ctx = build_context(store)
    for name, value in _parse_layer_flags(args.layer).items():
        ctx.activate_layer(name, value)
    if args.activate_all:
        for spec in ctx.order.specs:
            ctx.activate(ctx.cv(spec.layer_name))
    active = ctx.active_layers()
    for name in sorted(active):
        print(f"{name} = {active[name]}")
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = []
    lines = [bench_mod.CSV_HEADER]
    for n in args.n or [4]:
        spec = bench_mod.BenchSpec(args.mode, n, iters=args.iters, runs=args.runs)
        result = bench_mod.run(spec)
        lines.append(bench_mod.csv_row(result))
        rows.append(
            {"mode": args.mode, "n": n, "mean_ns": result.mean_ns}
        )
    text = "\n".join(lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
        print(f"wrote {args.csv}")
    else:
        sys.stdout.write(text)

    plot_path = args.plot
    if plot_path is None and args.csv and not args.no_plot:
        plot_path = str(Path(args.csv).with_suffix(".png"))
    if plot_path:
        from .report import render_bench_figure

        render_bench_figure(rows, plot_path)
        print(f"wrote {plot_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cv",
        description="Contextual value configuration tool",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate typed accessor source from a spec file")
    p.add_argument("spec_file", help="specification .ecf file")
    p.add_argument("-o", "--out-dir", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("get", help="evaluate a contextual value under ad-hoc layers")
    p.add_argument("a", metavar="[file] key")
    p.add_argument("b", nargs="?", metavar="key")
    p.add_argument(
        "--layer",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="ad-hoc active layer (repeatable)",
    )
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("set", help="set a key and persist with merge + notification")
    p.add_argument("a", metavar="[file] key")
    p.add_argument("b", nargs="?", metavar="key value")
    p.add_argument("c", nargs="?", metavar="value")
    p.set_defaults(func=cmd_set)

    p = sub.add_parser("spec-check", help="validate the specification, print order")
    p.add_argument("file", nargs="?", help="spec file (default: CV_CONFIG)")
    p.set_defaults(func=cmd_spec_check)

    p = sub.add_parser("layers", help="show active layers for a configuration")
    p.add_argument("file", nargs="?", help="config file (default: CV_CONFIG)")
    p.add_argument("--layer", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument(
        "--activate-all",
        action="store_true",
        help="activate every contextual value in update order first",
    )
    p.set_defaults(func=cmd_layers)

    p = sub.add_parser("bench", help="run a microbenchmark, emit CSV (and a figure)")
    p.add_argument("mode", choices=bench_mod.MODES)
    p.add_argument("--n", action="append", type=int, default=None,
                   help="layer/value count (repeatable; default 4)")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--runs", type=int, default=11)
    p.add_argument("--csv", help="write CSV here instead of stdout")
    p.add_argument("--plot", help="write a PNG figure here")
    p.add_argument("--no-plot", action="store_true",
                   help="skip the figure that otherwise accompanies --csv")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CtxvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
