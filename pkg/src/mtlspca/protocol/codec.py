"""Binary framing for the statistics exchange.

A connection opens with the 5-byte preamble ``b"MTLS" + version``. Every
frame after that is ``<u32 payload_length><u8 msg_type><payload>``, all
integers little-endian and all vectors raw little-endian float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from enum import IntEnum
from typing import ClassVar, Union

import numpy as np

from ..errors import MTLSPCAError

MAGIC = b"MTLS"
VERSION = 1
PREAMBLE = MAGIC + bytes([VERSION])
HEADER = struct.Struct("<IB")
MAX_PAYLOAD = 64 * 1024 * 1024

F64 = np.dtype("<f8")


class MsgType(IntEnum):
    REGISTER = 0x01
    UPLOAD_STATS = 0x02
    REQUEST_PROJECTION = 0x03
    PROJECTION = 0x04
    ACK = 0x05
    ERROR = 0x7F


class ErrorCode(IntEnum):
    UNKNOWN_TASK = 1
    MISSING_UPLOADS = 2
    DEGENERATE_MODEL = 3
    INVALID_REQUEST = 4
    BAD_MAGIC = 16
    BAD_VERSION = 17
    UNKNOWN_TYPE = 18
    TRUNCATED = 19
    LENGTH_OVERFLOW = 20
    MALFORMED_PAYLOAD = 21
    INTERNAL = 99


class ProtocolError(MTLSPCAError):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(f"[{int(code)}] {message}")
        self.code = code
        self.message = message


class _Msg:
    TYPE: ClassVar[MsgType]

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        for f in fields(self):  # type: ignore[arg-type]
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                # bitwise, so NaN payloads and signed zeros compare faithfully
                if a.shape != b.shape or a.astype(F64).tobytes() != b.astype(F64).tobytes():
                    return False
            elif isinstance(a, float) and isinstance(b, float):
                if struct.pack("<d", a) != struct.pack("<d", b):
                    return False
            elif a != b:
                return False
        return True


@dataclass(eq=False)
class Register(_Msg):
    TYPE: ClassVar[MsgType] = MsgType.REGISTER
    task_id: int
    num_classes: int
    p: int
    n1: int
    n2: int


@dataclass(eq=False)
class UploadStats(_Msg):
    """Half-split means of both classes: ``n_a[j], n_b[j], h_a[j], h_b[j]``."""

    TYPE: ClassVar[MsgType] = MsgType.UPLOAD_STATS
    task_id: int
    n_a: tuple[int, int]
    n_b: tuple[int, int]
    h_a: np.ndarray  # (2, p)
    h_b: np.ndarray  # (2, p)

    @property
    def p(self) -> int:
        return self.h_a.shape[1]


@dataclass(eq=False)
class RequestProjection(_Msg):
    TYPE: ClassVar[MsgType] = MsgType.REQUEST_PROJECTION
    target_task: int


@dataclass(eq=False)
class Projection(_Msg):
    TYPE: ClassVar[MsgType] = MsgType.PROJECTION
    v: np.ndarray
    zeta: float
    labels: np.ndarray


@dataclass(eq=False)
class Ack(_Msg):
    TYPE: ClassVar[MsgType] = MsgType.ACK
    task_id: int


@dataclass(eq=False)
class Error(_Msg):
    TYPE: ClassVar[MsgType] = MsgType.ERROR
    code: int
    message: str


Message = Union[Register, UploadStats, RequestProjection, Projection, Ack, Error]


def _vec(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=F64).tobytes()


def encode_payload(msg: Message) -> bytes:
    if isinstance(msg, Register):
        return struct.pack("<IHIII", msg.task_id, msg.num_classes, msg.p, msg.n1, msg.n2)
    if isinstance(msg, UploadStats):
        h_a, h_b = np.asarray(msg.h_a), np.asarray(msg.h_b)
        if h_a.shape != h_b.shape or h_a.ndim != 2 or h_a.shape[0] != 2:
            raise ValueError(f"half means must both be (2, p), got {h_a.shape} and {h_b.shape}")
        parts = [struct.pack("<I", msg.task_id)]
        for j in range(2):
            parts += [struct.pack("<II", msg.n_a[j], msg.n_b[j]), _vec(h_a[j]), _vec(h_b[j])]
        return b"".join(parts)
    if isinstance(msg, RequestProjection):
        return struct.pack("<I", msg.target_task)
    if isinstance(msg, Projection):
        v, y = np.asarray(msg.v).reshape(-1), np.asarray(msg.labels).reshape(-1)
        return b"".join(
            [struct.pack("<I", v.size), _vec(v), struct.pack("<d", msg.zeta), struct.pack("<I", y.size), _vec(y)]
        )
    if isinstance(msg, Ack):
        return struct.pack("<I", msg.task_id)
    if isinstance(msg, Error):
        text = msg.message.encode("utf-8")
        return struct.pack("<HI", msg.code, len(text)) + text
    raise TypeError(f"not a protocol message: {msg!r}")


def encode(msg: Message) -> bytes:
    payload = encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(ErrorCode.LENGTH_OVERFLOW, f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(len(payload), msg.TYPE) + payload


def _malformed(kind: str, detail: str) -> ProtocolError:
    return ProtocolError(ErrorCode.MALFORMED_PAYLOAD, f"{kind}: {detail}")


def _floats(buf: bytes, offset: int, count: int) -> np.ndarray:
    return np.frombuffer(buf, dtype=F64, count=count, offset=offset).astype(np.float64)


def decode_payload(msg_type: int, payload: bytes) -> Message:
    size = len(payload)
    try:
        kind = MsgType(msg_type)
    except ValueError:
        raise ProtocolError(ErrorCode.UNKNOWN_TYPE, f"unknown message type 0x{msg_type:02x}") from None

    if kind is MsgType.REGISTER:
        if size != 18:
            raise _malformed("REGISTER", f"expected 18 bytes, got {size}")
        return Register(*struct.unpack("<IHIII", payload))

    if kind is MsgType.UPLOAD_STATS:
        rest = size - 20
        if rest <= 0 or rest % 32:
            raise _malformed("UPLOAD_STATS", f"{size} bytes is not 20 + 32p for any p >= 1")
        p = rest // 32
        (task_id,) = struct.unpack_from("<I", payload, 0)
        off = 4
        n_a, n_b, h_a, h_b = [], [], [], []
        for _ in range(2):
            a, b = struct.unpack_from("<II", payload, off)
            off += 8
            n_a.append(a)
            n_b.append(b)
            h_a.append(_floats(payload, off, p))
            off += 8 * p
            h_b.append(_floats(payload, off, p))
            off += 8 * p
        return UploadStats(task_id, tuple(n_a), tuple(n_b), np.stack(h_a), np.stack(h_b))  # type: ignore[arg-type]

    if kind is MsgType.REQUEST_PROJECTION:
        if size != 4:
            raise _malformed("REQUEST_PROJECTION", f"expected 4 bytes, got {size}")
        return RequestProjection(*struct.unpack("<I", payload))

    if kind is MsgType.PROJECTION:
        if size < 16:
            raise _malformed("PROJECTION", f"{size} bytes is too short")
        (p,) = struct.unpack_from("<I", payload, 0)
        if 4 + 8 * p + 12 > size:
            raise _malformed("PROJECTION", f"declared p={p} overruns {size} bytes")
        v = _floats(payload, 4, p)
        off = 4 + 8 * p
        zeta, label_len = struct.unpack_from("<dI", payload, off)
        off += 12
        if off + 8 * label_len != size:
            raise _malformed("PROJECTION", f"declared {label_len} labels do not fill the remaining {size - off} bytes")
        return Projection(v, zeta, _floats(payload, off, label_len))

    if kind is MsgType.ACK:
        if size != 4:
            raise _malformed("ACK", f"expected 4 bytes, got {size}")
        return Ack(*struct.unpack("<I", payload))

    # ERROR
    if size < 6:
        raise _malformed("ERROR", f"{size} bytes is too short")
    code, msg_len = struct.unpack_from("<HI", payload, 0)
    if 6 + msg_len != size:
        raise _malformed("ERROR", f"declared {msg_len} text bytes, frame holds {size - 6}")
    try:
        text = payload[6:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise _malformed("ERROR", f"message is not UTF-8 ({exc.reason})") from None
    return Error(code, text)


def parse_header(header: bytes) -> tuple[int, int]:
    """Return ``(payload_length, msg_type)``; rejects oversized frames up front."""
    if len(header) < HEADER.size:
        raise ProtocolError(ErrorCode.TRUNCATED, f"frame header needs {HEADER.size} bytes, got {len(header)}")
    length, msg_type = HEADER.unpack(header[: HEADER.size])
    if length > MAX_PAYLOAD:
        raise ProtocolError(ErrorCode.LENGTH_OVERFLOW, f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    return length, msg_type


def decode_frame(buf: bytes) -> tuple[Message, int]:
    """Decode the first frame of ``buf``; returns the message and bytes consumed."""
    length, msg_type = parse_header(buf)
    end = HEADER.size + length
    if len(buf) < end:
        raise ProtocolError(ErrorCode.TRUNCATED, f"declared {length} payload bytes, got {len(buf) - HEADER.size}")
    return decode_payload(msg_type, bytes(buf[HEADER.size : end])), end


def decode(buf: bytes) -> Message:
    """Decode exactly one frame."""
    msg, used = decode_frame(buf)
    if used != len(buf):
        raise _malformed("frame", f"{len(buf) - used} trailing bytes")
    return msg


def check_preamble(buf: bytes) -> None:
    if len(buf) < len(PREAMBLE):
        raise ProtocolError(ErrorCode.TRUNCATED, "connection closed during preamble")
    if buf[:4] != MAGIC:
        raise ProtocolError(ErrorCode.BAD_MAGIC, f"bad magic {bytes(buf[:4])!r}")
    if buf[4] != VERSION:
        raise ProtocolError(ErrorCode.BAD_VERSION, f"unsupported protocol version {buf[4]}")
