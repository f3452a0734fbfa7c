"""Two-party protocol engine over a framed, ordered message channel."""

from .frames import (
    FrameType,
    MessageFrame,
    Transcript,
    LEAKAGE_FRAME_TYPES,
)
from .transport import (
    ChannelError,
    FaultSpec,
    InProcessPair,
    TcpChannel,
    connect_tcp,
    listen_tcp,
    listen_tcp_pair,
)
from .engine import (
    AbortReason,
    PartyOutcome,
    ProtocolParams,
    RunOutcome,
    alice_run,
    balance_sheet,
    bob_run,
    run_protocol,
    validate_bell,
)

__all__ = [
    "FrameType",
    "MessageFrame",
    "Transcript",
    "LEAKAGE_FRAME_TYPES",
    "ChannelError",
    "FaultSpec",
    "InProcessPair",
    "TcpChannel",
    "connect_tcp",
    "listen_tcp",
    "listen_tcp_pair",
    "AbortReason",
    "PartyOutcome",
    "ProtocolParams",
    "RunOutcome",
    "alice_run",
    "balance_sheet",
    "bob_run",
    "run_protocol",
    "validate_bell",
]
