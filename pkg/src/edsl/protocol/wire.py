"""Binary framing for round messages.

Layout, all little-endian::

    magic    4 bytes  b"EDSL"
    version  u8       1
    kind     u8       0 = model broadcast, 1 = gradient report, 2 = shutdown
    round    u32
    sender   u16
    length   u32      number of payload values (p, or 0)
    payload  length x float64

A worker announces itself with a gradient report carrying
``HANDSHAKE_ROUND`` and an empty payload.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import TransportError

MAGIC = b"EDSL"
VERSION = 1
HEADER = struct.Struct("<4sBBIHI")
HEADER_SIZE = HEADER.size  # 16
HANDSHAKE_ROUND = 0xFFFFFFFF
VALUE_SIZE = 8
_PAYLOAD_DTYPE = np.dtype("<f8")


class MessageKind(enum.IntEnum):
    MODEL_BROADCAST = 0
    GRADIENT_REPORT = 1
    SHUTDOWN = 2


@dataclass(frozen=True)
class RoundMessage:
    kind: MessageKind
    round: int
    sender: int
    payload: np.ndarray | None = None

    def __post_init__(self):
        kind = MessageKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not 0 <= self.round <= 0xFFFFFFFF:
            raise TransportError(f"round {self.round} does not fit in u32")
        if not 0 <= self.sender <= 0xFFFF:
            raise TransportError(f"sender {self.sender} does not fit in u16")
        if kind is MessageKind.MODEL_BROADCAST and self.sender != 0:
            raise TransportError("model broadcasts come from machine 0")
        if kind is MessageKind.GRADIENT_REPORT and self.sender < 1:
            raise TransportError("gradient reports come from machines 1..m-1")
        if kind is MessageKind.SHUTDOWN and self.payload is not None:
            raise TransportError("shutdown carries no payload")
        if self.payload is not None:
            payload = np.ascontiguousarray(self.payload, dtype=np.float64)
            if payload.ndim != 1:
                raise TransportError("payload must be a vector")
            object.__setattr__(self, "payload", payload)

    @property
    def payload_len(self):
        return 0 if self.payload is None else self.payload.shape[0]

    @property
    def payload_bytes(self):
        return self.payload_len * VALUE_SIZE

    @classmethod
    def handshake(cls, machine_id):
        return cls(MessageKind.GRADIENT_REPORT, HANDSHAKE_ROUND, machine_id)

    @property
    def is_handshake(self):
        return (self.kind is MessageKind.GRADIENT_REPORT
                and self.round == HANDSHAKE_ROUND and self.payload_len == 0)


def encode(msg):
    head = HEADER.pack(MAGIC, VERSION, int(msg.kind), msg.round, msg.sender,
                       msg.payload_len)
    if msg.payload is None:
        return head
    return head + msg.payload.astype(_PAYLOAD_DTYPE, copy=False).tobytes()


def decode_header(data):
    """Parse the fixed header; returns (kind, round, sender, payload_len)."""
    if len(data) < HEADER_SIZE:
        raise TransportError(f"short header: {len(data)} bytes")
    magic, version, kind, round_, sender, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TransportError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TransportError(f"unsupported protocol version {version}")
    try:
        kind = MessageKind(kind)
    except ValueError:
        raise TransportError(f"unknown message kind {kind}") from None
    return kind, round_, sender, length


def frame_size(length):
    return HEADER_SIZE + VALUE_SIZE * length


def decode(data):
    kind, round_, sender, length = decode_header(data)
    if len(data) != frame_size(length):
        raise TransportError(
            f"frame is {len(data)} bytes, header says {frame_size(length)}")
    payload = None
    if length:
        payload = np.frombuffer(data, dtype=_PAYLOAD_DTYPE, offset=HEADER_SIZE,
                                count=length).astype(np.float64)
    return RoundMessage(kind, round_, sender, payload)


def recv_exact(sock, size):
    chunks = bytearray()
    while len(chunks) < size:
        chunk = sock.recv(size - len(chunks))
        if not chunk:
            raise TransportError("connection closed mid-message")
        chunks += chunk
    return bytes(chunks)


def read_message(sock):
    head = recv_exact(sock, HEADER_SIZE)
    length = decode_header(head)[3]
    return decode(head + recv_exact(sock, VALUE_SIZE * length))


def send_message(sock, msg):
    sock.sendall(encode(msg))
