"""One end-to-end protocol run over TCP, optionally against an in-process server."""

from __future__ import annotations

import logging
import socket
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

from ..simulator import ProbabilityCache
from .client import ABORT_TRANSPORT, CircuitSource, ClientOutcome, client_run
from .config import ProtocolConfig
from .frames import FramedSocket
from .server import SampleServer
from .verify import Verification, verify

__all__ = ["EXIT_OK", "EXIT_ABORT", "EXIT_TRANSPORT", "EXIT_CONFIG", "RunResult", "serving", "connect", "run_protocol"]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_TRANSPORT = 3
EXIT_CONFIG = 4


@dataclass
class RunResult:
    outcome: ClientOutcome
    verification: Verification | None

    @property
    def abort(self) -> str | None:
        """None on success, else "time", "xeb" or "transport"."""
        if self.outcome.abort is not None:
            return self.outcome.abort
        if self.verification is not None and not self.verification.passed:
            return "xeb"
        return None

    @property
    def exit_code(self) -> int:
        a = self.abort
        if a is None:
            return EXIT_OK
        return EXIT_TRANSPORT if a == ABORT_TRANSPORT else EXIT_ABORT

    def summary(self) -> dict:
        t = self.outcome.transcript
        out = {
            "status": "pass" if self.abort is None else "abort",
            "abort": self.abort,
            "detail": self.outcome.detail,
            "M_keep": t.M_keep,
            "batches": len(t.batches),
            "discarded_batches": len(t.batches) - len(t.kept_batches),
            "T_tot_s": t.T_tot,
            "t_qc_s": t.t_qc if t.M_keep else None,
        }
        if self.verification is not None:
            out["xeb"] = self.verification.xeb
            out["chi"] = self.verification.chi
        return out


@contextmanager
def serving(server: SampleServer, host: str = "127.0.0.1", port: int = 0) -> Iterator[tuple[str, int]]:
    """Run ``server`` on a background thread; yields the bound address."""
    listener = socket.create_server((host, port))
    stop = threading.Event()
    th = threading.Thread(target=server.serve, args=(listener, stop), daemon=True)
    th.start()
    try:
        yield listener.getsockname()[:2]
    finally:
        stop.set()
        th.join(timeout=5)
        listener.close()


def connect(host: str, port: int, timeout: float = 5.0) -> FramedSocket:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return FramedSocket(sock)


def _run_client(cfg, host, port, source, cache) -> RunResult:
    try:
        conn = connect(host, port)
    except OSError as e:
        log.warning("cannot reach server at %s:%s: %s", host, port, e)
        conn = None
    try:
        outcome = client_run(cfg, conn, source, reconnect=lambda: connect(host, port))
    finally:
        if conn is not None:
            conn.close()
    ver = None
    if outcome.abort is None:
        ver = verify(outcome.transcript, source, cfg.m, cfg.chi, nonce=cfg.test_set_nonce, cache=cache)
    return RunResult(outcome, ver)


def run_protocol(
    cfg: ProtocolConfig,
    server: SampleServer | None = None,
    *,
    source: CircuitSource | None = None,
    cache: ProbabilityCache | None = None,
) -> RunResult:
    """Run client and verifier; with ``server`` given it is spawned on an ephemeral local port."""
    source = source or CircuitSource(cfg.topology(), cfg.seed)
    if cache is None:
        cache = server.cache if server is not None else ProbabilityCache()
    if server is None:
        return _run_client(cfg, cfg.host, cfg.port, source, cache)
    with serving(server, cfg.host, 0) as (host, port):
        return _run_client(cfg, host, port, source, cache)

