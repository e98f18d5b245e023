"""Desk-scale case study: a localized web responder driven by contextual values.

`cv-demo serve` answers HTTP GETs with a minimal HTML page containing the
current greeting value.  One background thread owns the context and syncs it
when notified, at most every `--sync-ms` milliseconds, then swaps an
immutable snapshot under a short lock; request handlers only read snapshots.
`cv-demo sensor` is the separate process that mutates the persistent values.
`cv-demo sweep` measures how the sync interval affects the reply rate.

HTTP is deliberately hand-rolled HTTP/1.0, GET only: the case study needs a
load target, not a web framework.  A `?session=NAME` query parameter is
served through a per-request `session` layer.
"""

from __future__ import annotations

import argparse
import re
import socket
import subprocess
import sys
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import CtxvalError
from .notify import PendingFlag, StampFileTransport, check_and_sync
from .runtime import build_context, evaluate, to_text
from .store import StoreHandle

GREETING_LAYER = "greeting"


@dataclass
class ServerConfig:
    listen: tuple[str, int]
    config_path: Path
    sync_ms: int  # 0 = sync on every request; < 0 = never sync
    poll_ms: int = 25


@dataclass
class RequestStats:
    requests: int = 0
    replies: int = 0
    timeouts: int = 0
    elapsed: float = 0.0


class _Snapshot:
    """Immutable view the request handlers read: store, layers, greeting."""

    __slots__ = ("store", "layers", "spec", "text")

    def __init__(self, store, layers, spec):
        self.store = store
        self.layers = dict(layers)
        self.spec = spec
        _, value = evaluate(spec, self.layers, store)
        self.text = to_text(value)

    def render(self, session: str | None) -> str:
        if session:
            layers = dict(self.layers, session=session)
            _, value = evaluate(self.spec, layers, self.store)
            return to_text(value)
        return self.text


class GreetingServer:
    """One sync thread owns the context; handlers read swapped snapshots."""

    def __init__(self, cfg: ServerConfig):
        self.cfg = cfg
        self._transport = StampFileTransport(
            cfg.config_path, poll_interval=cfg.poll_ms / 1000.0
        )
        self._flag = PendingFlag()
        self._handle = StoreHandle(cfg.config_path)
        store, _ = self._handle.get()
        self._ctx = build_context(store)
        if GREETING_LAYER not in {s.layer_name for s in self._ctx.order.specs}:
            raise CtxvalError(
                f"configuration must specify a {GREETING_LAYER!r} contextual value"
            )
        for spec in self._ctx.order.specs:
            self._ctx.activate(self._ctx.cv(spec.layer_name))
        self._lock = threading.Lock()
        self._snapshot = self._build_snapshot()
        self._stop = threading.Event()
        self._registration = None
        self._sock: socket.socket | None = None
        self.port: int | None = None

    def _build_snapshot(self) -> _Snapshot:
        return _Snapshot(
            self._ctx.store,
            self._ctx.layers,
            self._ctx.cv(GREETING_LAYER).spec,
        )

    def _sync_once(self) -> None:
        with self._lock:
            if check_and_sync(self._flag, self._ctx, self._handle):
                self._snapshot = self._build_snapshot()

    def _sync_loop(self) -> None:
        interval = self.cfg.sync_ms / 1000.0
        while not self._stop.wait(interval):
            self._sync_once()

    def start(self) -> None:
        self._sock = socket.create_server(self.cfg.listen, backlog=128)
        self.port = self._sock.getsockname()[1]
        if self.cfg.sync_ms >= 0:
            self._registration = self._transport.subscribe(self._flag)
        if self.cfg.sync_ms > 0:
            threading.Thread(
                target=self._sync_loop, daemon=True, name="cv-demo-sync"
            ).start()

    def serve_forever(self) -> None:
        assert self._sock is not None
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                break
            threading.Thread(
                target=self._handle_connection, args=(conn,), daemon=True
            ).start()

    def stop(self) -> None:
        self._stop.set()
        if self._registration is not None:
            self._registration.close()
        if self._sock is not None:
            self._sock.close()

    def _handle_connection(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(5.0)
            data = b""
            while b"\r\n" not in data and b"\n" not in data and len(data) < 4096:
                chunk = conn.recv(1024)
                if not chunk:
                    break
                data += chunk
            line = data.split(b"\r\n", 1)[0].split(b"\n", 1)[0].decode(
                "latin-1", "replace"
            )
            parts = line.split()
            if len(parts) < 2 or parts[0] != "GET":
                self._respond(conn, 400, "<html><body>bad request</body></html>")
                return
            target = parts[1]
            session = None
            match = re.search(r"[?&]session=([^&\s]+)", target)
            if match:
                session = match.group(1)
            if self.cfg.sync_ms == 0:
                self._sync_once()
            with self._lock:
                snapshot = self._snapshot
            body = f"<html><body><p>{snapshot.render(session)}</p></body></html>"
            self._respond(conn, 200, body)
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    @staticmethod
    def _respond(conn: socket.socket, status: int, body: str) -> None:
        reason = {200: "OK", 400: "Bad Request"}[status]
        payload = body.encode("utf-8")
        head = (
            f"HTTP/1.0 {status} {reason}\r\n"
            f"Content-Type: text/html; charset=utf-8\r\n"
            f"Content-Length: {len(payload)}\r\n"
            "Connection: close\r\n\r\n"
        )
        conn.sendall(head.encode("ascii") + payload)


def serve(cfg: ServerConfig) -> GreetingServer:
    """Start and run a server in the foreground (blocks until stopped)."""
    server = GreetingServer(cfg)
    server.start()
    print(f"listening on {cfg.listen[0]}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return server


def sensor_write(handle: StoreHandle, key: str, value: str) -> None:
    """One sensor update: read-merge-write plus change notification."""
    store, _ = handle.get()
    handle.set(store.set(key, value))


def sensor(
    config_path,
    key: str,
    values: list[str],
    period_ms: int,
    count: int | None = None,
) -> None:
    """Cycle `key` through `values` every `period_ms` until stopped."""
    path = Path(config_path)
    handle = StoreHandle(path, transport=StampFileTransport(path))
    written = 0
    while count is None or written < count:
        value = values[written % len(values)]
        sensor_write(handle, key, value)
        written += 1
        if count is not None and written >= count:
            break
        time.sleep(period_ms / 1000.0)


def http_get(addr: tuple[str, int], path: str = "/", timeout: float = 1.0) -> str:
    """Tiny HTTP/1.0 GET helper; returns the response body."""
    with socket.create_connection(addr, timeout=timeout) as conn:
        conn.sendall(f"GET {path} HTTP/1.0\r\n\r\n".encode("ascii"))
        data = b""
        while True:
            chunk = conn.recv(4096)
            if not chunk:
                break
            data += chunk
    head, _, body = data.partition(b"\r\n\r\n")
    if not head.startswith(b"HTTP/1.0 200") and not head.startswith(b"HTTP/1.1 200"):
        raise OSError(f"unexpected response: {head[:40]!r}")
    return body.decode("utf-8", "replace")


def drive_load(
    addr: tuple[str, int],
    rate: float,
    duration: float,
    timeout: float = 1.0,
    workers: int = 8,
) -> RequestStats:
    """Offer fixed-rate GET load for `duration` seconds."""
    stats = RequestStats()
    if rate <= 0 or duration <= 0:
        return stats
    total = int(rate * duration)
    lock = threading.Lock()
    start = time.perf_counter()

    counter = iter(range(total))
    counter_lock = threading.Lock()

    def worker():
        while True:
            with counter_lock:
                k = next(counter, None)
            if k is None:
                return
            target = start + k / rate
            delay = target - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            with lock:
                stats.requests += 1
            try:
                http_get(addr, timeout=timeout)
                with lock:
                    stats.replies += 1
            except socket.timeout:
                with lock:
                    stats.timeouts += 1
            except OSError:
                pass

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    stats.elapsed = time.perf_counter() - start
    return stats


SWEEP_CSV_HEADER = "sync_ms,offered_rate,reply_rate,timeouts"

_OFF = -1


def _parse_sync_ms(text: str) -> int:
    return _OFF if text.strip().lower() == "off" else int(text)


def _spawn_server(config_path: Path, sync_ms: int) -> tuple[subprocess.Popen, int]:
    cmd = [
        sys.executable,
        "-m",
        "ctxval.demo",
        "serve",
        "--listen",
        "127.0.0.1:0",
        "--config",
        str(config_path),
        "--sync-ms",
        "off" if sync_ms == _OFF else str(sync_ms),
    ]
    proc = subprocess.Popen(
        cmd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True
    )
    line = proc.stdout.readline()
    match = re.search(r"listening on [^:]+:(\d+)", line)
    if not match:
        proc.terminate()
        raise CtxvalError(f"server did not start: {line.strip()!r}")
    return proc, int(match.group(1))


def _spawn_sensor(config_path: Path, key: str, period_ms: int) -> subprocess.Popen:
    cmd = [
        sys.executable,
        "-m",
        "ctxval.demo",
        "sensor",
        "--config",
        str(config_path),
        "--key",
        key,
        "--values",
        "german,english",
        "--period-ms",
        str(period_ms),
    ]
    return subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)


def load_sweep(
    config_path,
    rates: list[float],
    sync_ms_list: list[int],
    duration: float,
    sensor_key: str = "language",
    sensor_period_ms: int = 25,
    target: tuple[str, int] | None = None,
) -> list[dict]:
    """Measure reply rates per sync interval; spawns server+sensor per interval.

    With an explicit `target` no processes are spawned; the given server is
    driven as-is and the interval column merely labels the rows.
    """
    rows: list[dict] = []
    for sync_ms in sync_ms_list:
        server_proc = sensor_proc = None
        try:
            if target is None:
                path = Path(config_path)
                server_proc, port = _spawn_server(path, sync_ms)
                sensor_proc = _spawn_sensor(path, sensor_key, sensor_period_ms)
                addr = ("127.0.0.1", port)
            else:
                addr = target
            for rate in rates:
                stats = drive_load(addr, rate, duration)
                reply_rate = stats.replies / stats.elapsed if stats.elapsed else 0.0
                rows.append(
                    {
                        "sync_ms": "off" if sync_ms == _OFF else sync_ms,
                        "offered_rate": rate,
                        "reply_rate": round(reply_rate, 2),
                        "timeouts": stats.timeouts,
                    }
                )
        finally:
            for proc in (sensor_proc, server_proc):
                if proc is not None:
                    proc.terminate()
                    proc.wait(timeout=5)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for row in rows:
        lines.append(
            f"{row['sync_ms']},{row['offered_rate']},"
            f"{row['reply_rate']},{row['timeouts']}"
        )
    return "\n".join(lines) + "\n"


# -- command line ----------------------------------------------------------


def _parse_listen(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise CtxvalError(f"--listen expects host:port, got {text!r}")
    return host, int(port)


def cmd_serve(args) -> int:
    cfg = ServerConfig(
        listen=_parse_listen(args.listen),
        config_path=Path(args.config),
        sync_ms=_parse_sync_ms(args.sync_ms),
        poll_ms=args.poll_ms,
    )
    serve(cfg)
    return 0


def cmd_sensor(args) -> int:
    sensor(
        Path(args.config),
        args.key,
        args.values.split(","),
        args.period_ms,
        count=args.count,
    )
    return 0


def cmd_sweep(args) -> int:
    target = _parse_listen(args.target) if args.target else None
    if target is None and not args.config:
        raise CtxvalError("sweep needs --config (to spawn servers) or --target")
    rows = load_sweep(
        args.config,
        rates=[float(r) for r in args.rates.split(",")],
        sync_ms_list=[_parse_sync_ms(s) for s in args.sync_ms.split(",")],
        duration=args.duration,
        target=target,
    )
    text = sweep_csv(rows)
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
        print(f"wrote {args.csv}")
        if not args.no_plot:
            from .report import render_sweep_figure

            figure = Path(args.csv).with_suffix(".png")
            render_sweep_figure(rows, figure)
            print(f"wrote {figure}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cv-demo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve localized pages from a config file")
    p.add_argument("--listen", default="127.0.0.1:8080", metavar="HOST:PORT")
    p.add_argument("--config", required=True)
    p.add_argument("--sync-ms", default="100",
                   help="sync interval in ms; 0 = every request; 'off' = never")
    p.add_argument("--poll-ms", type=int, default=25)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("sensor", help="cycle a key through values periodically")
    p.add_argument("--config", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--values", required=True, metavar="A,B,...")
    p.add_argument("--period-ms", type=int, default=100)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_sensor)

    p = sub.add_parser("sweep", help="reply-rate sweep over sync intervals")
    p.add_argument("--target", metavar="HOST:PORT")
    p.add_argument("--config")
    p.add_argument("--rates", required=True, metavar="R1,R2,...")
    p.add_argument("--sync-ms", required=True, metavar="MS1,MS2,... (or 'off')")
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--csv")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CtxvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
