"""Server side: an honest noisy device and an adversary with a simulation budget.

Both servers read framed messages from one client at a time, answer PRECHECK
with READY, and answer each BATCH with one bitstring per circuit.  Circuits
arrive as text and are simulated (or looked up) by the digest of that text.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..circuits import CircuitParseError, circuit_digest, parse_circuit
from ..simulator import (
    CapacityError,
    DepolarizedOracle,
    Distribution,
    ProbabilityCache,
    frugal_rejection_sample,
    sample_exact,
    sample_fidelity,
)
from .frames import BadPayload, FramedSocket, FrameError, MsgType, error, ready, result

__all__ = ["LatencyModel", "SampleServer", "HonestServer", "AdversaryServer"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyModel:
    """Simulated device time: per-circuit service time plus periodic calibration pauses."""

    per_sample_s: float = 0.0
    jitter_s: float = 0.0
    calibration_every: int = 0
    calibration_s: float = 0.0

    def batch_delay(self, size: int, rng: np.random.Generator) -> float:
        if not (self.per_sample_s or self.jitter_s):
            return 0.0
        return float(size * self.per_sample_s + self.jitter_s * rng.random(size).sum())

    def precheck_delay(self, batches_served: int) -> float:
        if self.calibration_every and batches_served and batches_served % self.calibration_every == 0:
            return self.calibration_s
        return 0.0


class SampleServer:
    """Protocol loop shared by the concrete servers; subclasses choose how to sample."""

    def __init__(
        self,
        latency: LatencyModel | None = None,
        rng: np.random.Generator | None = None,
        cache: ProbabilityCache | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.latency = latency or LatencyModel()
        self.rng = rng if rng is not None else np.random.default_rng()
        self.cache = cache if cache is not None else ProbabilityCache()
        self.sleep = sleep
        self.batches_served = 0
        self.arrivals = 0

    def sample(self, dist: Distribution, position: int) -> int:
        raise NotImplementedError

    def _distribution(self, text: str) -> Distribution:
        raw = text.encode("ascii")
        return self.cache.get(circuit_digest(raw), lambda: parse_circuit(raw))

    def _answer_batch(self, msg: dict) -> dict:
        bid = msg.get("batch_id")
        jobs = msg.get("jobs")
        if not isinstance(jobs, list) or not all(isinstance(j, list) and 1 <= len(j) <= 2 for j in jobs):
            return error("BATCH needs a list of jobs holding one or two circuits", bid)
        texts = [c for j in jobs for c in j]
        if not all(isinstance(c, str) for c in texts):
            return error("circuits must be strings", bid)
        try:
            dists = [self._distribution(c) for c in texts]
        except (CircuitParseError, CapacityError, UnicodeEncodeError) as e:
            return error(f"bad circuit: {e}", bid)
        if len({d.n for d in dists}) != 1:
            return error("circuits in a batch must share n", bid)
        out = []
        for d in dists:
            out.append(self.sample(d, self.arrivals))
            self.arrivals += 1
        self.sleep(self.latency.batch_delay(len(texts), self.rng))
        self.batches_served += 1
        return result(bid, out, dists[0].n)

    def handle(self, conn: FramedSocket, stop: threading.Event | None = None) -> None:
        """Serve one client until it disconnects or ``stop`` is set."""
        while stop is None or not stop.is_set():
            try:
                msg = conn.recv(0.25 if stop is not None else None)
            except TimeoutError:
                continue
            except BadPayload as e:
                conn.send(error(str(e)))
                continue
            except (FrameError, ConnectionError, OSError) as e:
                log.info("closing client connection: %s", e)
                return
            t = msg["type"]
            if t == MsgType.PRECHECK.value:
                self.sleep(self.latency.precheck_delay(self.batches_served))
                reply = ready(msg.get("batch_id"))
            elif t == MsgType.BATCH.value:
                reply = self._answer_batch(msg)
            else:
                reply = error(f"unexpected {t}", msg.get("batch_id"))
            try:
                conn.send(reply)
            except OSError as e:
                log.info("client went away: %s", e)
                return

    def serve(self, listener: socket.socket, stop: threading.Event, max_clients: int | None = None) -> None:
        """Accept clients one after another on ``listener`` until ``stop`` is set."""
        listener.settimeout(0.2)
        served = 0
        while not stop.is_set() and (max_clients is None or served < max_clients):
            try:
                sock, addr = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            log.info("client connected from %s", addr)
            conn = FramedSocket(sock)
            try:
                self.handle(conn, stop)
            finally:
                conn.close()
            served += 1


class HonestServer(SampleServer):
    """A device of fidelity ``phi``: ideal sample with probability phi, uniform otherwise."""

    def __init__(self, phi: float, **kw):
        super().__init__(**kw)
        if not 0.0 <= phi <= 1.0:
            raise ValueError(f"fidelity must be in [0, 1], got {phi}")
        self.phi = phi

    def sample(self, dist: Distribution, position: int) -> int:
        return int(sample_fidelity(dist, self.phi, self.rng))


class AdversaryServer(SampleServer):
    """Classical adversary that answers instantly.

    ``Q`` arrival positions among the first ``M`` are fixed in advance and
    answered with exact samples.  The classical budget ``P_eff * t_threshold * M / B``
    is split evenly over the other ``M - Q`` rounds, each answered by frugal
    rejection sampling against a depolarized oracle of that fidelity.  Once
    the budget is spent the answers are uniform.
    """

    def __init__(self, Q: int, M: int, P_eff: float, B: float, t_threshold: float, M_prime: int = 64, **kw):
        super().__init__(**kw)
        if not 0 <= Q <= M:
            raise ValueError(f"need 0 <= Q <= M, got Q={Q}, M={M}")
        if P_eff < 0 or not B > 0:
            raise ValueError("need P_eff >= 0 and B > 0")
        self.Q, self.M, self.M_prime = Q, M, M_prime
        self.budget = P_eff * t_threshold * M / B
        self.phi_A = min(1.0, self.budget / (M - Q)) if M > Q else 0.0
        self.spent = 0.0
        self.q_positions = frozenset(int(i) for i in self.rng.choice(M, size=Q, replace=False))

    def sample(self, dist: Distribution, position: int) -> int:
        if position in self.q_positions:
            return int(sample_exact(dist, self.rng))
        phi = min(self.phi_A, max(0.0, self.budget - self.spent))
        if phi <= 0.0:
            return int(self.rng.integers(0, 1 << dist.n))
        self.spent += phi
        return int(frugal_rejection_sample(DepolarizedOracle(dist.probs, phi), self.M_prime, self.rng, max_rounds=None))
