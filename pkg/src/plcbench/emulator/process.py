"""Run the emulator in a child process.

Measuring sub-millisecond gaps while the emulator shares an interpreter (and
its GIL) with the harness skews the result, so tests and the CLI keep the two
apart.
"""
from __future__ import annotations

import multiprocessing as mp
import signal

from .. import errors
from .server import EmulatorConfig, serve
from .store import DataBlockStore


def _child(config: EmulatorConfig, conn) -> None:
    signal.signal(signal.SIGINT, signal.SIG_IGN)
    try:
        emulator = serve(config.profile, DataBlockStore(config.data_blocks), config.endpoints,
                         jitter=config.jitter, seed=config.seed)
    except Exception as exc:  # reported to the parent, which re-raises
        conn.send(("error", type(exc).__name__, str(exc)))
        return
    conn.send(("ok", emulator.ports))
    try:
        conn.recv()
    except EOFError:
        pass
    emulator.stop()
    conn.send(("stopped",))


class EmulatorProcess:
    def __init__(self, config: EmulatorConfig, start_timeout: float = 10.0):
        # fork avoids re-importing the caller's __main__; spawn elsewhere
        ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
        self._conn, child_conn = ctx.Pipe()
        self._proc = ctx.Process(target=_child, args=(config, child_conn), daemon=True)
        self._proc.start()
        child_conn.close()
        if not self._conn.poll(start_timeout):
            self._proc.kill()
            raise errors.MeasurementTimeout("emulator process did not start")
        try:
            reply = self._conn.recv()
        except EOFError:
            self._proc.join(2)
            raise errors.PlcBenchError(f"emulator process exited with code {self._proc.exitcode}") from None
        if reply[0] == "error":
            self._proc.join(2)
            exc_type = getattr(errors, reply[1], errors.PlcBenchError)
            if not (isinstance(exc_type, type) and issubclass(exc_type, errors.PlcBenchError)):
                exc_type = errors.PlcBenchError
            raise exc_type(reply[2])
        self.ports: dict[str, int] = reply[1]

    def stop(self, timeout: float = 5.0) -> None:
        if self._proc.is_alive():
            try:
                self._conn.send("stop")
                self._conn.poll(timeout)
            except (BrokenPipeError, EOFError, OSError):
                pass
        self._proc.join(timeout)
        if self._proc.is_alive():
            self._proc.kill()
            self._proc.join()
        self._conn.close()

    def __enter__(self) -> "EmulatorProcess":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def spawn(config: EmulatorConfig) -> EmulatorProcess:
    return EmulatorProcess(config)
