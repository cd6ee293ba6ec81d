"""Central client: keeps the uploaded statistics and answers projection requests."""

from __future__ import annotations

import asyncio
import logging
import threading
from dataclasses import dataclass
from typing import Literal

from ..core import ClassifierBundle, fit_bundle
from ..errors import DegenerateModelError, MTLSPCAError
from ..stats import ClassStats, TaskStats
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
    check_preamble,
    decode_payload,
    encode,
    parse_header,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Snapshot:
    registrations: dict[int, Register]
    stats: dict[int, TaskStats]
    version: int


class CentralRegistry:
    """Thread-safe store of registrations and uploaded task statistics.

    Writers take the lock; readers copy both maps under the lock and compute
    outside it, so a reply never mixes two states of the registry.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._registrations: dict[int, Register] = {}
        self._stats: dict[int, TaskStats] = {}
        self._version = 0

    def register(self, msg: Register) -> None:
        if msg.num_classes != 2:
            raise ProtocolError(ErrorCode.INVALID_REQUEST, f"only 2-class tasks are supported, got {msg.num_classes}")
        if msg.p < 1:
            raise ProtocolError(ErrorCode.INVALID_REQUEST, "p must be positive")
        if msg.n1 < 2 or msg.n2 < 2:
            raise ProtocolError(ErrorCode.INVALID_REQUEST, f"every class needs >= 2 samples, got ({msg.n1}, {msg.n2})")
        with self._lock:
            others = {r.p for t, r in self._registrations.items() if t != msg.task_id}
            if others and msg.p not in others:
                raise ProtocolError(
                    ErrorCode.INVALID_REQUEST, f"task {msg.task_id} registers p={msg.p}, registry uses p={others.pop()}"
                )
            if self._registrations.get(msg.task_id) == msg:
                return
            self._registrations[msg.task_id] = msg
            self._stats.pop(msg.task_id, None)
            self._version += 1

    def upload(self, msg: UploadStats) -> None:
        with self._lock:
            reg = self._registrations.get(msg.task_id)
            if reg is None:
                raise ProtocolError(ErrorCode.UNKNOWN_TASK, f"task {msg.task_id} is not registered")
            if msg.p != reg.p:
                raise ProtocolError(ErrorCode.INVALID_REQUEST, f"task {msg.task_id} uploads p={msg.p}, registered p={reg.p}")
            for j, n in enumerate((reg.n1, reg.n2)):
                if msg.n_a[j] + msg.n_b[j] != n:
                    raise ProtocolError(
                        ErrorCode.INVALID_REQUEST,
                        f"task {msg.task_id} class {j + 1}: halves {msg.n_a[j]}+{msg.n_b[j]} != registered {n}",
                    )
            try:
                stats = TaskStats(
                    msg.task_id,
                    tuple(ClassStats(msg.n_a[j], msg.n_b[j], msg.h_a[j], msg.h_b[j]) for j in range(2)),  # type: ignore[arg-type]
                )
            except MTLSPCAError as exc:
                raise ProtocolError(ErrorCode.INVALID_REQUEST, str(exc)) from None
            self._stats[msg.task_id] = stats
            self._version += 1

    def snapshot(self) -> Snapshot:
        with self._lock:
            return Snapshot(dict(self._registrations), dict(self._stats), self._version)

    def projection(self, target: int, labels: Literal["optimal", "naive"] = "optimal") -> ClassifierBundle:
        snap = self.snapshot()
        if target not in snap.registrations:
            raise ProtocolError(ErrorCode.UNKNOWN_TASK, f"target task {target} is not registered")
        missing = sorted(set(snap.registrations) - set(snap.stats))
        if missing:
            raise ProtocolError(ErrorCode.MISSING_UPLOADS, f"no statistics uploaded yet for tasks {missing}")
        try:
            return fit_bundle(list(snap.stats.values()), target, labels)
        except DegenerateModelError as exc:
            raise ProtocolError(ErrorCode.DEGENERATE_MODEL, str(exc)) from None


def central_handle(registry: CentralRegistry, msg: Message) -> list[Message]:
    """Apply one client message; protocol failures come back as ERROR frames."""
    try:
        if isinstance(msg, Register):
            registry.register(msg)
            return [Ack(msg.task_id)]
        if isinstance(msg, UploadStats):
            registry.upload(msg)
            return [Ack(msg.task_id)]
        if isinstance(msg, RequestProjection):
            bundle = registry.projection(msg.target_task)
            return [Projection(bundle.v, bundle.zeta, bundle.labels)]
        raise ProtocolError(ErrorCode.INVALID_REQUEST, f"clients may not send {msg.TYPE.name}")
    except ProtocolError as exc:
        return [Error(int(exc.code), exc.message)]
    except Exception as exc:  # never let one request take the server down
        log.exception("request failed")
        return [Error(int(ErrorCode.INTERNAL), f"{type(exc).__name__}: {exc}")]


class CentralServer:
    """asyncio TCP front end for a :class:`CentralRegistry`."""

    def __init__(self, registry: CentralRegistry | None = None, host: str = "127.0.0.1", port: int = 0) -> None:
        self.registry = registry or CentralRegistry()
        self.host = host
        self.port = port
        self._server: asyncio.base_events.Server | None = None

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("central client listening on %s:%d", self.host, self.port)

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _send(self, writer: asyncio.StreamWriter, msgs: list[Message]) -> None:
        for m in msgs:
            writer.write(encode(m))
        await writer.drain()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        try:
            try:
                check_preamble(await reader.readexactly(len(PREAMBLE)))
            except asyncio.IncompleteReadError as exc:
                check_preamble(exc.partial)
            while True:
                try:
                    header = await reader.readexactly(HEADER.size)
                except asyncio.IncompleteReadError as exc:
                    if exc.partial:
                        raise ProtocolError(ErrorCode.TRUNCATED, "connection closed inside a frame header") from None
                    return
                length, msg_type = parse_header(header)
                try:
                    payload = await reader.readexactly(length)
                except asyncio.IncompleteReadError as exc:
                    raise ProtocolError(
                        ErrorCode.TRUNCATED, f"declared {length} payload bytes, got {len(exc.partial)}"
                    ) from None
                try:
                    msg = decode_payload(msg_type, payload)
                except ProtocolError as exc:
                    # frame boundaries are intact, so the connection survives
                    await self._send(writer, [Error(int(exc.code), exc.message)])
                    continue
                if isinstance(msg, RequestProjection):
                    replies = await asyncio.to_thread(central_handle, self.registry, msg)
                else:
                    replies = central_handle(self.registry, msg)
                await self._send(writer, replies)
        except ProtocolError as exc:
            log.info("closing %s: %s", peer, exc)
            try:
                await self._send(writer, [Error(int(exc.code), exc.message)])
            except ConnectionError:
                pass
        except ConnectionError:
            pass
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass


class ServerThread:
    """Run a :class:`CentralServer` on a background event loop.

    >>> with ServerThread() as srv:  # doctest: +SKIP
    ...     CentralClient("127.0.0.1", srv.port)
    """

    def __init__(self, registry: CentralRegistry | None = None, host: str = "127.0.0.1", port: int = 0) -> None:
        self.server = CentralServer(registry, host, port)
        self._loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self._loop.run_forever, daemon=True)

    @property
    def port(self) -> int:
        return self.server.port

    @property
    def registry(self) -> CentralRegistry:
        return self.server.registry

    def start(self) -> "ServerThread":
        self._thread.start()
        asyncio.run_coroutine_threadsafe(self.server.start(), self._loop).result()
        return self

    def stop(self) -> None:
        asyncio.run_coroutine_threadsafe(self.server.close(), self._loop).result()
        self._loop.call_soon_threadsafe(self._loop.stop)
        self._thread.join()
        self._loop.close()

    def __enter__(self) -> "ServerThread":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()

