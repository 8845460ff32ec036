"""Client side of the certification protocol.

The client regenerates challenge circuits from the shared seed, sends them in
batches of ``2b``, and records the round-trip time of each batch on a
monotonic clock.  Batches that miss their cutoff are discarded and replaced
by fresh circuits, so the kept set always ends up with exactly ``M``
circuits.  Prechecks that keep failing turn into a transport abort.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from ..circuits import ChallengeCircuit, SeedMaterial, Topology, circuit_digest, gen_circuit, serialize_circuit
from .config import ProtocolConfig
from .frames import FrameError, MsgType, batch, hex_to_bits, precheck
from .transcript import DISCARDED, KEPT, BatchRecord, Transcript

__all__ = [
    "Connection",
    "CircuitSource",
    "ClientOutcome",
    "ABORT_TIME",
    "ABORT_TRANSPORT",
    "client_run",
]

log = logging.getLogger(__name__)

ABORT_TIME = "time"
ABORT_TRANSPORT = "transport"


class Connection(Protocol):
    def send(self, msg: dict) -> None: ...

    def recv(self, timeout: float | None = None) -> dict: ...

    def close(self) -> None: ...


class CircuitSource:
    """Circuit ``i`` of a run, with its wire text and cache key memoized."""

    def __init__(self, topology: Topology, seed: SeedMaterial):
        self.topology = topology
        self.seed = seed
        self._text: dict[int, tuple[str, str]] = {}

    def circuit(self, cid: int) -> ChallengeCircuit:
        return gen_circuit(self.topology, self.seed, cid)

    def _entry(self, cid: int) -> tuple[str, str]:
        e = self._text.get(cid)
        if e is None:
            raw = serialize_circuit(self.circuit(cid))
            e = (raw.decode("ascii"), circuit_digest(raw))
            self._text[cid] = e
        return e

    def text(self, cid: int) -> str:
        return self._entry(cid)[0]

    def key(self, cid: int) -> str:
        return self._entry(cid)[1]


@dataclass
class ClientOutcome:
    transcript: Transcript
    abort: str | None = None
    detail: str = ""

    @property
    def completed(self) -> bool:
        return self.abort is None


def _await(conn: Connection, mtype: str, batch_id: int, deadline: float, clock) -> dict:
    """Wait for a ``mtype`` frame for ``batch_id``; stale frames are skipped."""
    while True:
        left = deadline - clock()
        if left <= 0:
            raise TimeoutError(f"no {mtype} for batch {batch_id}")
        try:
            msg = conn.recv(left)
        except FrameError as e:
            log.warning("dropping malformed frame: %s", e)
            continue
        if msg.get("batch_id") != batch_id:
            log.debug("skipping stale %s for batch %s", msg.get("type"), msg.get("batch_id"))
            continue
        if msg["type"] == MsgType.ERROR.value:
            raise RuntimeError(f"server error on batch {batch_id}: {msg.get('reason')}")
        if msg["type"] == mtype:
            return msg


def _precheck(conn: Connection, batch_id: int, timeout: float, clock) -> bool:
    """True on READY; a dead connection propagates as OSError."""
    try:
        conn.send(precheck(batch_id))
        _await(conn, MsgType.READY.value, batch_id, clock() + timeout, clock)
        return True
    except (TimeoutError, RuntimeError) as e:
        log.info("precheck for batch %d failed: %s", batch_id, e)
        return False


def _parse_result(msg: dict, n: int, size: int) -> list[int]:
    bits = msg.get("bitstrings")
    if not isinstance(bits, list) or len(bits) != size:
        raise FrameError(f"expected {size} bitstrings")
    return [hex_to_bits(s, n) for s in bits]


def client_run(
    cfg: ProtocolConfig,
    conn: Connection | None,
    source: CircuitSource | None = None,
    *,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
    reconnect: Callable[[], Connection] | None = None,
) -> ClientOutcome:
    """Collect ``cfg.M`` kept samples, then apply the time test ``T_tot / M <= t_threshold``."""
    if source is None:
        source = CircuitSource(cfg.topology(), cfg.seed)
    t = Transcript(cfg.n)
    next_cid = 0
    bid = 0
    failures = 0
    full = 2 * cfg.b

    while t.M_keep < cfg.M:
        if failures >= cfg.max_consecutive_failures:
            return ClientOutcome(t, ABORT_TRANSPORT, f"{failures} consecutive failed batches")

        ready = False
        for attempt in range(cfg.precheck_retries + 1):
            if conn is None and reconnect is not None:
                try:
                    conn = reconnect()
                except OSError as e:
                    log.info("reconnect failed: %s", e)
            if conn is not None:
                try:
                    ready = _precheck(conn, bid, cfg.precheck_timeout_s, clock)
                except OSError as e:
                    log.warning("connection lost during precheck: %s", e)
                    conn.close()
                    conn = None
                if ready:
                    break
            sleep(cfg.backoff_s * 2**attempt)
        if not ready:
            failures += 1
            bid += 1
            continue

        # the final batch is shortened so exactly M circuits are kept
        size = min(full, cfg.M - t.M_keep)
        cids = list(range(next_cid, next_cid + size))
        next_cid += size
        msg = batch(bid, [source.text(c) for c in cids])
        cutoff = cfg.batch_cutoff_s(size)

        bits = None
        t_send = clock()
        try:
            conn.send(msg)
            res = _await(conn, MsgType.RESULT.value, bid, t_send + cutoff, clock)
            bits = _parse_result(res, cfg.n, size)
        except TimeoutError:
            log.info("batch %d missed its %.3g s cutoff", bid, cutoff)
        except (FrameError, RuntimeError) as e:
            log.warning("batch %d rejected: %s", bid, e)
        except OSError as e:
            log.warning("batch %d transport error: %s", bid, e)
            conn.close()
            conn = None
        t_recv = clock()

        if bits is not None and t_recv - t_send <= cutoff:
            t.add(BatchRecord(bid, cids, bits, t_send, t_recv, KEPT))
            failures = 0
        else:
            t.add(BatchRecord(bid, cids, None, t_send, t_recv, DISCARDED))
            failures += 1
        bid += 1

    if t.t_qc > cfg.t_threshold_s:
        return ClientOutcome(t, ABORT_TIME, f"t_qc={t.t_qc:.4g} s exceeds {cfg.t_threshold_s} s")
    return ClientOutcome(t)
