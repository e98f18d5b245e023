"""Notification tests: transports, pending flags, check_and_sync."""

import os
import signal
import subprocess
import sys
import textwrap
import time

import ctxval.store as store_mod
from ctxval.notify import (
    ChangeEvent,
    PendingFlag,
    PidSignalTransport,
    StampFileTransport,
    check_and_sync,
)
from ctxval.runtime import build_context
from ctxval.store import StoreHandle


def wait_for(predicate, timeout=5.0, interval=0.005):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return predicate()


class TestPendingFlag:
    def test_set_clear(self):
        flag = PendingFlag()
        assert not flag.is_set()
        flag.set()
        assert flag.is_set()
        flag.clear()
        assert not flag.is_set()


class TestStampTransport:
    def test_publish_sets_subscriber_flag_within_two_intervals(self, tmp_path):
        config = tmp_path / "c.ecf"
        transport = StampFileTransport(config, poll_interval=0.05)
        flag = PendingFlag()
        with transport.subscribe(flag):
            start = time.monotonic()
            transport.publish_change(str(config))
            assert wait_for(flag.is_set, timeout=5.0)
            assert time.monotonic() - start < 5.0

    def test_publish_with_zero_subscribers(self, tmp_path):
        transport = StampFileTransport(tmp_path / "c.ecf")
        transport.publish_change(str(tmp_path / "c.ecf"))  # must not raise

    def test_rapid_publishes_coalesce(self, tmp_path):
        config = tmp_path / "c.ecf"
        transport = StampFileTransport(config, poll_interval=0.05)
        flag = PendingFlag()
        with transport.subscribe(flag):
            for _ in range(3):
                transport.publish_change(str(config))
            assert wait_for(flag.is_set)
            # one flag covers all three; clearing and republishing re-arms
            flag.clear()
            transport.publish_change(str(config))
            assert wait_for(flag.is_set)

    def test_dropped_registration_stops_delivery(self, tmp_path):
        config = tmp_path / "c.ecf"
        transport = StampFileTransport(config, poll_interval=0.02)
        flag = PendingFlag()
        registration = transport.subscribe(flag)
        registration.close()
        transport.publish_change(str(config))
        time.sleep(0.2)
        assert not flag.is_set()

    def test_stamp_file_is_a_decimal_counter(self, tmp_path):
        config = tmp_path / "c.ecf"
        transport = StampFileTransport(config)
        transport.publish_change(str(config))
        transport.publish_change(str(config))
        stamp = (tmp_path / ".notify" / "c.ecf.stamp").read_text().strip()
        assert stamp == "2"

    def test_sequence_numbers_strictly_increase(self, tmp_path):
        events = []

        class Spy(StampFileTransport):
            def publish(self, event: ChangeEvent):
                events.append(event)
                super().publish(event)

        transport = Spy(tmp_path / "c.ecf")
        for _ in range(3):
            transport.publish_change("x")
        assert events[0].sender_id == os.getpid()
        assert events[0].seq < events[1].seq < events[2].seq


class TestPidTransport:
    def test_subscribe_registers_and_signal_sets_flag(self, tmp_path):
        config = tmp_path / "c.ecf"
        transport = PidSignalTransport(config, signum=signal.SIGUSR1)
        flag = PendingFlag()
        with transport.subscribe(flag):
            registry = tmp_path / ".notify" / "c.ecf.pids"
            assert str(os.getpid()) in registry.read_text().split()
            transport.publish_change(str(config))
            assert wait_for(flag.is_set, timeout=2.0)
        assert registry.read_text().split() == []

    def test_stale_pid_is_pruned_without_error(self, tmp_path):
        config = tmp_path / "c.ecf"
        # a child that registers and then dies leaves a stale pid behind
        child = subprocess.run(
            [
                sys.executable,
                "-c",
                textwrap.dedent(
                    """
                    import os, sys
                    from ctxval.notify import PidSignalTransport, PendingFlag
                    t = PidSignalTransport(sys.argv[1])
                    t.subscribe(PendingFlag())
                    print(f"registered {os.getpid()}")
                    """
                ),
                str(config),
            ],
            capture_output=True,
            text=True,
            timeout=10,
        )
        child_pid = child.stdout.split()[1]
        registry = tmp_path / ".notify" / "c.ecf.pids"
        assert child_pid in registry.read_text().split()
        transport = PidSignalTransport(config, signum=signal.SIGUSR1)
        transport.publish_change(str(config))  # must not raise
        assert child_pid not in registry.read_text().split()

    def test_respects_env_signal_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CV_NOTIFY_SIGNAL", str(int(signal.SIGUSR2)))
        transport = PidSignalTransport(tmp_path / "c.ecf")
        assert transport.signum == signal.SIGUSR2


class TestCheckAndSync:
    def fixture(self, tmp_path):
        path = tmp_path / "c.ecf"
        path.write_text(
            "[language]\nlanguage = english\n"
            "[greeting/%language%]\n"
            "greeting/* = Hello!\ngreeting/german = Guten Tag!\n"
        )
        handle = StoreHandle(path)
        store, _ = handle.get()
        ctx = build_context(store)
        ctx.activate(ctx.cv("language"))
        return path, handle, ctx

    def test_unset_flag_returns_false_with_zero_store_access(
        self, tmp_path, monkeypatch
    ):
        path, handle, ctx = self.fixture(tmp_path)
        calls = [0]
        original = StoreHandle.get

        def counting(self):
            calls[0] += 1
            return original(self)

        monkeypatch.setattr(StoreHandle, "get", counting)
        assert check_and_sync(PendingFlag(), ctx, handle) is False
        assert calls[0] == 0

    def test_set_flag_with_changed_file_updates_cvs(self, tmp_path):
        path, handle, ctx = self.fixture(tmp_path)
        writer = StoreHandle(path)
        store, _ = writer.get()
        writer.set(store.set("language", "german"))
        flag = PendingFlag()
        flag.set()
        assert check_and_sync(flag, ctx, handle) is True
        assert not flag.is_set()
        assert ctx.cv("greeting").read() == "Guten Tag!"

    def test_spurious_wake_is_harmless(self, tmp_path):
        path, handle, ctx = self.fixture(tmp_path)
        before = ctx.cv("greeting").read()
        flag = PendingFlag()
        flag.set()
        assert check_and_sync(flag, ctx, handle) is True
        assert ctx.cv("greeting").read() == before

    def test_delivery_path_never_touches_the_store(self, tmp_path, monkeypatch):
        """While a subscription is live and events arrive, the transport
        itself performs no config parsing."""
        config = tmp_path / "c.ecf"
        config.write_text("a = 1\n")
        calls = [0]
        original = store_mod.parse_config

        def counting(text):
            calls[0] += 1
            return original(text)

        monkeypatch.setattr(store_mod, "parse_config", counting)
        transport = StampFileTransport(config, poll_interval=0.01)
        flag = PendingFlag()
        with transport.subscribe(flag):
            for _ in range(5):
                transport.publish_change(str(config))
                time.sleep(0.02)
            wait_for(flag.is_set)
        assert calls[0] == 0


class TestTwoProcessIntegration:
    def test_publish_reaches_subscriber_process(self, tmp_path):
        config = tmp_path / "c.ecf"
        config.write_text("a = 1\n")
        flag_file = tmp_path / "flagged"
        child_code = textwrap.dedent(
            """
            import sys, time
            from ctxval.notify import PendingFlag, StampFileTransport

            config, flag_file = sys.argv[1], sys.argv[2]
            transport = StampFileTransport(config, poll_interval=0.02)
            flag = PendingFlag()
            with transport.subscribe(flag):
                print("ready", flush=True)
                deadline = time.monotonic() + 5.0
                while time.monotonic() < deadline and not flag.is_set():
                    time.sleep(0.01)
            if flag.is_set():
                open(flag_file, "w").write("observed")
            """
        )
        child = subprocess.Popen(
            [sys.executable, "-c", child_code, str(config), str(flag_file)],
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            assert child.stdout.readline().strip() == "ready"
            transport = StampFileTransport(config)
            transport.publish_change(str(config))
            child.wait(timeout=10)
        finally:
            if child.poll() is None:
                child.kill()
        assert flag_file.read_text() == "observed"

    def test_handle_set_notifies_other_process_end_to_end(self, tmp_path):
        config = tmp_path / "c.ecf"
        config.write_text(
            "[language]\nlanguage = english\n"
            "[greeting/%language%]\n"
            "greeting/* = Hello!\ngreeting/german = Guten Tag!\n"
        )
        child_code = textwrap.dedent(
            """
            import sys, time
            from ctxval.notify import PendingFlag, StampFileTransport, check_and_sync
            from ctxval.runtime import build_context
            from ctxval.store import StoreHandle

            config = sys.argv[1]
            handle = StoreHandle(config)
            ctx = build_context(handle.get()[0])
            ctx.activate(ctx.cv("language"))
            transport = StampFileTransport(config, poll_interval=0.02)
            flag = PendingFlag()
            with transport.subscribe(flag):
                print("ready", flush=True)
                deadline = time.monotonic() + 5.0
                while time.monotonic() < deadline:
                    if check_and_sync(flag, ctx, handle):
                        break
                    time.sleep(0.01)
            print("greeting:" + ctx.cv("greeting").read(), flush=True)
            """
        )
        child = subprocess.Popen(
            [sys.executable, "-c", child_code, str(config)],
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            assert child.stdout.readline().strip() == "ready"
            handle = StoreHandle(config, transport=StampFileTransport(config))
            store, _ = handle.get()
            handle.set(store.set("language", "german"))
            out, _ = child.communicate(timeout=10)
        finally:
            if child.poll() is None:
                child.kill()
        assert "greeting:Guten Tag!" in out
