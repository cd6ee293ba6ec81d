"""Blocking request/response client used by target and source tasks."""

from __future__ import annotations

import socket
import time

import numpy as np

from ..core import ClassifierBundle, classify, score
from ..errors import StructuralError, TransportError
from ..stats import TaskStats, task_stats
from .codec import (
    HEADER,
    PREAMBLE,
    Ack,
    Error,
    ErrorCode,
    Message,
    Projection,
    ProtocolError,
    Register,
    RequestProjection,
    UploadStats,
    decode_payload,
    encode,
    parse_header,
)


class RemoteError(ProtocolError):
    """The central client answered with an ERROR frame."""


def parse_addr(addr: str, default_port: int = 7654) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        return addr, default_port
    return host or "127.0.0.1", int(port)


def upload_message(stats: TaskStats) -> UploadStats:
    a, b = stats.classes
    return UploadStats(
        stats.task_id, (a.n_a, b.n_a), (a.n_b, b.n_b), np.stack([a.h_a, b.h_a]), np.stack([a.h_b, b.h_b])
    )


def bundle_from_projection(msg: Projection, target: int) -> ClassifierBundle:
    return ClassifierBundle(v=np.asarray(msg.v), zeta=float(msg.zeta), target=target, labels=np.asarray(msg.labels))


class CentralClient:
    def __init__(self, host: str, port: int, timeout: float | None = 30.0) -> None:
        self.bytes_sent = 0
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot reach central client at {host}:{port}: {exc}") from exc
        self._send_raw(PREAMBLE)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "CentralClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _send_raw(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc
        self.bytes_sent += len(data)

    def _recv_exact(self, size: int) -> bytes:
        chunks, got = [], 0
        while got < size:
            try:
                chunk = self._sock.recv(size - got)
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if not chunk:
                raise TransportError("central client closed the connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def send(self, msg: Message) -> None:
        self._send_raw(encode(msg))

    def receive(self) -> Message:
        length, msg_type = parse_header(self._recv_exact(HEADER.size))
        return decode_payload(msg_type, self._recv_exact(length))

    def call(self, msg: Message) -> Message:
        self.send(msg)
        reply = self.receive()
        if isinstance(reply, Error):
            raise RemoteError(reply.code, reply.message)
        return reply

    def register(self, task_id: int, p: int, n1: int, n2: int) -> None:
        reply = self.call(Register(task_id, 2, p, n1, n2))
        if not isinstance(reply, Ack):
            raise ProtocolError(ErrorCode.INVALID_REQUEST, f"expected ACK, got {reply.TYPE.name}")

    def upload(self, stats: TaskStats) -> None:
        reply = self.call(upload_message(stats))
        if not isinstance(reply, Ack):
            raise ProtocolError(ErrorCode.INVALID_REQUEST, f"expected ACK, got {reply.TYPE.name}")

    def request_projection(self, target: int, wait: float = 0.0, poll: float = 0.1) -> ClassifierBundle:
        """Fetch the classifier for ``target``.

        With ``wait > 0``, a MISSING_UPLOADS answer is retried until the
        deadline passes (other tasks may still be uploading).
        """
        deadline = time.monotonic() + wait
        while True:
            try:
                reply = self.call(RequestProjection(target))
            except RemoteError as exc:
                if exc.code == ErrorCode.MISSING_UPLOADS and time.monotonic() < deadline:
                    time.sleep(poll)
                    continue
                raise
            if not isinstance(reply, Projection):
                raise ProtocolError(ErrorCode.INVALID_REQUEST, f"expected PROJECTION, got {reply.TYPE.name}")
            return bundle_from_projection(reply, target)


def target_client_run(
    client: CentralClient,
    task_id: int,
    class1: np.ndarray,
    class2: np.ndarray,
    test_x: np.ndarray | None = None,
    *,
    request: bool = True,
    wait: float = 0.0,
    shuffle_seed: int | None = None,
) -> np.ndarray | None:
    """Upload this task's statistics, fetch its classifier, label ``test_x`` (p x m).

    Everything is validated locally before the first byte is sent.
    """
    stats = task_stats(task_id, class1, class2, shuffle_seed)
    if test_x is not None:
        test_x = np.asarray(test_x, dtype=np.float64)
        if test_x.ndim != 2 or test_x.shape[0] != stats.p:
            raise StructuralError(f"test samples have dimension {test_x.shape[0]}, training data has p={stats.p}")
    client.register(task_id, stats.p, *stats.counts)
    client.upload(stats)
    if not request:
        return None
    bundle = client.request_projection(task_id, wait=wait)
    if test_x is None:
        return None
    return classify(score(bundle, test_x))
