"""Length-prefixed JSON frames.

Each frame is a 4-byte big-endian payload length followed by a UTF-8 JSON
object whose ``type`` is one of PRECHECK, READY, BATCH, RESULT or ERROR.
Payloads are written with sorted keys and no insignificant whitespace, so a
message always encodes to the same bytes.
"""

from __future__ import annotations

import json
import socket
import struct
import time
from enum import Enum
from typing import Sequence

__all__ = [
    "MAX_FRAME",
    "MsgType",
    "FrameError",
    "IncompleteFrame",
    "BadPayload",
    "encode_frame",
    "decode_frame",
    "FramedSocket",
    "precheck",
    "ready",
    "batch",
    "result",
    "error",
    "bits_to_hex",
    "hex_to_bits",
]

MAX_FRAME = 16 << 20
_HDR = struct.Struct(">I")


class MsgType(str, Enum):
    PRECHECK = "PRECHECK"
    READY = "READY"
    BATCH = "BATCH"
    RESULT = "RESULT"
    ERROR = "ERROR"


class FrameError(ValueError):
    pass


class IncompleteFrame(FrameError):
    """More bytes are needed to finish the frame."""


class BadPayload(FrameError):
    """A complete frame whose payload is unusable; ``consumed`` bytes can be skipped."""

    def __init__(self, msg: str, consumed: int):
        super().__init__(msg)
        self.consumed = consumed


def encode_frame(msg: dict) -> bytes:
    t = msg.get("type")
    if t not in MsgType._value2member_map_:
        raise FrameError(f"unknown message type {t!r}")
    payload = json.dumps(msg, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise FrameError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME}")
    return _HDR.pack(len(payload)) + payload


def decode_frame(buf: bytes | bytearray | memoryview) -> tuple[dict, int]:
    """Decode one frame from the front of ``buf``; returns (message, bytes consumed)."""
    if len(buf) < _HDR.size:
        raise IncompleteFrame("short header")
    (size,) = _HDR.unpack_from(buf)
    if size > MAX_FRAME:
        raise FrameError(f"frame of {size} bytes exceeds {MAX_FRAME}")
    end = _HDR.size + size
    if len(buf) < end:
        raise IncompleteFrame(f"need {end} bytes, have {len(buf)}")
    try:
        msg = json.loads(bytes(buf[_HDR.size : end]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BadPayload(f"bad payload: {e}", end) from None
    if not isinstance(msg, dict):
        raise BadPayload("payload is not an object", end)
    if msg.get("type") not in MsgType._value2member_map_:
        raise BadPayload(f"unknown message type {msg.get('type')!r}", end)
    return msg, end


class FramedSocket:
    """Frame reader/writer over a stream socket with per-call deadlines."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._buf = bytearray()

    def send(self, msg: dict) -> None:
        self.sock.settimeout(None)
        self.sock.sendall(encode_frame(msg))

    def recv(self, timeout: float | None = None) -> dict:
        """Next frame; raises TimeoutError on deadline and ConnectionError on EOF."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            try:
                msg, used = decode_frame(self._buf)
                del self._buf[:used]
                return msg
            except IncompleteFrame:
                pass
            except BadPayload as e:
                del self._buf[: e.consumed]
                raise
            if deadline is None:
                self.sock.settimeout(None)
            else:
                left = deadline - time.monotonic()
                if left <= 0:
                    raise TimeoutError("frame deadline exceeded")
                self.sock.settimeout(left)
            try:
                chunk = self.sock.recv(1 << 16)
            except socket.timeout:
                raise TimeoutError("frame deadline exceeded") from None
            if not chunk:
                raise ConnectionError("peer closed the connection")
            self._buf += chunk

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def bits_to_hex(x: int, n: int) -> str:
    return format(int(x), f"0{-(-n // 4)}x")


def hex_to_bits(s: str, n: int) -> int:
    x = int(s, 16)
    if x >> n:
        raise FrameError(f"bitstring {s} does not fit in {n} bits")
    return x


def precheck(batch_id: int) -> dict:
    return {"type": "PRECHECK", "batch_id": batch_id}


def ready(batch_id: int) -> dict:
    return {"type": "READY", "batch_id": batch_id}


def batch(batch_id: int, circuits: Sequence[str]) -> dict:
    """Circuits are paired into jobs of two, the last job possibly holding one."""
    jobs = [list(circuits[i : i + 2]) for i in range(0, len(circuits), 2)]
    return {"type": "BATCH", "batch_id": batch_id, "jobs": jobs}


def result(batch_id: int, samples: Sequence[int], n: int) -> dict:
    return {"type": "RESULT", "batch_id": batch_id, "n": n, "bitstrings": [bits_to_hex(x, n) for x in samples]}


def error(reason: str, batch_id: int | None = None) -> dict:
    return {"type": "ERROR", "batch_id": batch_id, "reason": reason}
