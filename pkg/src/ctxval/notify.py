"""Inter-process change notification.

After a successful persist, other interested processes must learn that the
configuration changed so they can sync at their next synchronization point.
Delivery is deliberately dumb: the only thing a delivery path ever does is
set a PendingFlag in the subscribing process.  At-least-once with coalescing
is enough because sync is idempotent.

Two transports implement one interface:

* StampFileTransport -- the publisher bumps a decimal counter file next to
  the configuration file; subscribers poll its content from a background
  thread.  Fully portable; the default.
* PidSignalTransport -- subscribers append their PID to a registry file;
  the publisher sends a user-designated signal (CV_NOTIFY_SIGNAL, default
  SIGUSR1) to every registered PID and prunes the ones that are gone.

Both keep their state under a `.notify/` directory beside the configuration
file.
"""

from __future__ import annotations

import fcntl
import itertools
import os
import signal as signal_module
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from .store import StoreHandle

_SEQ = itertools.count(1)

DEFAULT_POLL_INTERVAL = 0.05


@dataclass(frozen=True)
class ChangeEvent:
    parent_path: str
    seq: int
    sender_id: int


class PendingFlag:
    """A boolean the delivery path may set and nothing else may touch.

    Plain attribute stores are atomic under the interpreter lock, which makes
    this safe to set from a poller thread or a signal handler.
    """

    __slots__ = ("_value",)

    def __init__(self):
        self._value = False

    def set(self) -> None:
        self._value = True

    def clear(self) -> None:
        self._value = False

    def is_set(self) -> bool:
        return self._value


def _notify_dir(config_path: Path) -> Path:
    base = config_path if config_path.is_dir() else config_path.parent
    return base / ".notify"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class Registration:
    """Active subscription; drop it (close) to deregister."""

    def __init__(self, cancel):
        self._cancel = cancel

    def close(self) -> None:
        if self._cancel is not None:
            self._cancel()
            self._cancel = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Transport:
    """Common surface: publish events, subscribe flags."""

    def publish_change(self, parent_path: str) -> None:
        self.publish(ChangeEvent(parent_path, next(_SEQ), os.getpid()))

    def publish(self, event: ChangeEvent) -> None:
        raise NotImplementedError

    def subscribe(self, flag: PendingFlag) -> Registration:
        raise NotImplementedError


class StampFileTransport(Transport):
    """Counter file bumped on publish, polled by subscribers."""

    def __init__(self, config_path, poll_interval: float = DEFAULT_POLL_INTERVAL):
        self.config_path = Path(config_path)
        self.poll_interval = poll_interval
        self.stamp_path = _notify_dir(self.config_path) / (
            f"{self.config_path.name}.stamp"
        )

    def _read_token(self):
        try:
            return self.stamp_path.read_text(encoding="ascii").strip()
        except FileNotFoundError:
            return None

    def publish(self, event: ChangeEvent) -> None:
        try:
            token = self._read_token()
            counter = int(token) if token and token.isdigit() else 0
            _atomic_write(self.stamp_path, f"{counter + 1}\n")
        except OSError as exc:  # must never block the publisher's persist
            print(f"ctxval notify: stamp publish failed: {exc}")

    def subscribe(self, flag: PendingFlag) -> Registration:
        stop = threading.Event()
        last = self._read_token()

        def poll():
            nonlocal last
            while not stop.wait(self.poll_interval):
                token = self._read_token()
                if token != last:
                    last = token
                    flag.set()

        thread = threading.Thread(target=poll, daemon=True, name="ctxval-stamp-poll")
        thread.start()

        def cancel():
            stop.set()
            thread.join(timeout=2.0)

        return Registration(cancel)


def _default_signal() -> int:
    env = os.environ.get("CV_NOTIFY_SIGNAL")
    if env:
        return int(env)
    return signal_module.SIGUSR1


class PidSignalTransport(Transport):
    """PID registry plus OS signal; the handler only sets the flag."""

    def __init__(self, config_path, signum: int | None = None):
        self.config_path = Path(config_path)
        self.signum = signum if signum is not None else _default_signal()
        self.registry_path = _notify_dir(self.config_path) / (
            f"{self.config_path.name}.pids"
        )
        self._flags: list[PendingFlag] = []
        self._previous_handler = None

    def _locked_registry(self, mutate):
        """Run `mutate(pids) -> pids` with the registry exclusively locked."""
        self.registry_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.registry_path, "a+", encoding="ascii") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            fh.seek(0)
            pids = [int(line) for line in fh.read().split() if line.isdigit()]
            new_pids = mutate(pids)
            if new_pids is not None and new_pids != pids:
                fh.seek(0)
                fh.truncate()
                fh.write("".join(f"{pid}\n" for pid in new_pids))
                fh.flush()
            fcntl.flock(fh, fcntl.LOCK_UN)

    def publish(self, event: ChangeEvent) -> None:
        def signal_all(pids):
            alive = []
            for pid in pids:
                try:
                    os.kill(pid, self.signum)
                    alive.append(pid)
                except ProcessLookupError:
                    continue  # crashed subscriber: prune silently
                except PermissionError:
                    alive.append(pid)
            return alive

        try:
            self._locked_registry(signal_all)
        except OSError as exc:
            print(f"ctxval notify: signal publish failed: {exc}")

    def subscribe(self, flag: PendingFlag) -> Registration:
        if not self._flags:
            def handler(signum, frame):
                for pending in self._flags:
                    pending.set()

            self._previous_handler = signal_module.signal(self.signum, handler)
            self._locked_registry(
                lambda pids: pids if os.getpid() in pids else pids + [os.getpid()]
            )
        self._flags.append(flag)

        def cancel():
            self._flags.remove(flag)
            if not self._flags:
                self._locked_registry(
                    lambda pids: [p for p in pids if p != os.getpid()]
                )
                signal_module.signal(self.signum, self._previous_handler)

        return Registration(cancel)


def check_and_sync(flag: PendingFlag, ctx, handle: StoreHandle) -> bool:
    """At a synchronization point: sync iff a change was flagged.

    Clears the flag before syncing; a sync error leaves it cleared and the
    caller may re-arm.  Returns whether a sync ran.
    """
    if not flag.is_set():
        return False
    flag.clear()
    ctx.sync(handle)
    return True
