"""Client/server certification protocol over length-prefixed JSON frames."""

from .client import ABORT_TIME, ABORT_TRANSPORT, CircuitSource, ClientOutcome, client_run
from .config import ConfigError, ProtocolConfig
from .frames import FrameError, FramedSocket, MsgType, decode_frame, encode_frame
from .run import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, EXIT_TRANSPORT, RunResult, connect, run_protocol, serving
from .server import AdversaryServer, HonestServer, LatencyModel, SampleServer
from .transcript import DISCARDED, KEPT, BatchRecord, Transcript
from .verify import Verification, select_test_set, verify

__all__ = [
    "ABORT_TIME",
    "ABORT_TRANSPORT",
    "AdversaryServer",
    "BatchRecord",
    "CircuitSource",
    "ClientOutcome",
    "ConfigError",
    "DISCARDED",
    "EXIT_ABORT",
    "EXIT_CONFIG",
    "EXIT_OK",
    "EXIT_TRANSPORT",
    "FrameError",
    "FramedSocket",
    "HonestServer",
    "KEPT",
    "LatencyModel",
    "MsgType",
    "ProtocolConfig",
    "RunResult",
    "SampleServer",
    "Transcript",
    "Verification",
    "client_run",
    "connect",
    "decode_frame",
    "encode_frame",
    "run_protocol",
    "select_test_set",
    "serving",
    "verify",
]
