import socket
import struct
import threading

import numpy as np
import pytest

from mtlspca.core import classify, fit_bundle, score
from mtlspca.datasets import gen_transfer, transfer_spec
from mtlspca.errors import StructuralError, TransportError
from mtlspca.protocol import (
    CentralClient,
    CentralRegistry,
    ErrorCode,
    RemoteError,
    ServerThread,
    central_handle,
    target_client_run,
    upload_message,
)
from mtlspca.protocol.codec import (
    HEADER,
    PREAMBLE,
    Ack,
    Error,
    Projection,
    Register,
    RequestProjection,
    decode_payload,
    encode,
)
from mtlspca.stats import task_stats

from .conftest import random_dataset


def _register_and_upload(registry, stats):
    for s in stats:
        assert central_handle(registry, Register(s.task_id, 2, s.p, *s.counts)) == [Ack(s.task_id)]
        assert central_handle(registry, upload_message(s)) == [Ack(s.task_id)]


def test_request_before_upload_is_code_2():
    reg = CentralRegistry()
    central_handle(reg, Register(1, 2, 5, 10, 10))
    (reply,) = central_handle(reg, RequestProjection(1))
    assert isinstance(reply, Error) and reply.code == ErrorCode.MISSING_UPLOADS


def test_unknown_target_is_code_1():
    (reply,) = central_handle(CentralRegistry(), RequestProjection(9))
    assert isinstance(reply, Error) and reply.code == ErrorCode.UNKNOWN_TASK


def test_degenerate_model_is_code_3():
    reg = CentralRegistry()
    zeros = np.zeros((3, 4))
    _register_and_upload(reg, [task_stats(1, zeros, zeros)])
    (reply,) = central_handle(reg, RequestProjection(1))
    assert isinstance(reply, Error) and reply.code == ErrorCode.DEGENERATE_MODEL


def test_invalid_registrations_and_uploads(rng):
    reg = CentralRegistry()
    assert central_handle(reg, Register(1, 3, 5, 10, 10))[0].code == ErrorCode.INVALID_REQUEST
    assert central_handle(reg, Register(1, 2, 5, 1, 10))[0].code == ErrorCode.INVALID_REQUEST
    central_handle(reg, Register(1, 2, 5, 10, 10))
    # p must agree across tasks
    assert central_handle(reg, Register(2, 2, 6, 10, 10))[0].code == ErrorCode.INVALID_REQUEST
    s = task_stats(1, rng.standard_normal((5, 9)), rng.standard_normal((5, 10)))
    assert central_handle(reg, upload_message(s))[0].code == ErrorCode.INVALID_REQUEST
    other = task_stats(3, rng.standard_normal((5, 10)), rng.standard_normal((5, 10)))
    assert central_handle(reg, upload_message(other))[0].code == ErrorCode.UNKNOWN_TASK
    bad = upload_message(task_stats(1, rng.standard_normal((5, 10)), rng.standard_normal((5, 10))))
    bad.h_a[0, 0] = np.nan
    assert central_handle(reg, bad)[0].code == ErrorCode.INVALID_REQUEST
    assert central_handle(reg, Projection(np.ones(1), 0.0, np.ones(2)))[0].code == ErrorCode.INVALID_REQUEST


def test_single_symmetric_task_reduction(rng):
    p, n = 15, 200
    mu = rng.standard_normal(p) / np.sqrt(p)
    stats = [task_stats(1, rng.standard_normal((p, n)) - mu[:, None], rng.standard_normal((p, n)) + mu[:, None])]
    reg = CentralRegistry()
    _register_and_upload(reg, stats)
    (reply,) = central_handle(reg, RequestProjection(1))
    assert isinstance(reply, Projection)
    a, b = stats[0].classes
    diff = a.mu - b.mu
    assert abs(reply.zeta) < 0.15
    cos = reply.v @ diff / np.linalg.norm(diff)
    assert cos > 0.999


def test_identical_tasks_get_equal_labels(rng):
    x1, x2 = rng.standard_normal((8, 30)) + 0.5, rng.standard_normal((8, 30)) - 0.5
    reg = CentralRegistry()
    _register_and_upload(reg, [task_stats(1, x1, x2), task_stats(2, x1, x2)])
    (reply,) = central_handle(reg, RequestProjection(1))
    np.testing.assert_allclose(reply.labels[:2], reply.labels[2:], rtol=1e-10, atol=1e-12)


def test_request_does_not_mutate_and_upload_is_idempotent(rng):
    stats = [task_stats(t, *xy) for t, xy in random_dataset(rng, 3, 7).items()]
    reg = CentralRegistry()
    _register_and_upload(reg, stats)
    before = reg.snapshot()
    first = central_handle(reg, RequestProjection(2))[0]
    assert reg.snapshot().version == before.version
    central_handle(reg, upload_message(stats[1]))
    assert central_handle(reg, RequestProjection(2))[0] == first


def test_reregistration_drops_stale_stats(rng):
    reg = CentralRegistry()
    s = task_stats(1, rng.standard_normal((4, 6)), rng.standard_normal((4, 6)))
    _register_and_upload(reg, [s])
    central_handle(reg, Register(1, 2, 4, 6, 6))
    assert 1 in reg.snapshot().stats
    central_handle(reg, Register(1, 2, 4, 8, 6))
    assert 1 not in reg.snapshot().stats


def test_concurrent_uploads_are_serialized(rng):
    data = random_dataset(rng, 8, 6)
    stats = [task_stats(t, *xy) for t, xy in data.items()]
    reg = CentralRegistry()
    threads = [threading.Thread(target=_register_and_upload, args=(reg, [s])) for s in stats]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    (reply,) = central_handle(reg, RequestProjection(3))
    ref = fit_bundle(stats, 3)
    assert reply.v.tobytes() == ref.v.tobytes() and reply.zeta == ref.zeta


# --- over TCP ----------------------------------------------------------------


@pytest.fixture
def server():
    with ServerThread() as srv:
        yield srv


def test_loopback_matches_in_process(server):
    ds = gen_transfer(transfer_spec(1.0, seed=4, n_test=10_000))
    with CentralClient("127.0.0.1", server.port) as src:
        target_client_run(src, 1, *ds.tasks[1], request=False)
    with CentralClient("127.0.0.1", server.port) as tgt:
        pred = target_client_run(tgt, 2, *ds.tasks[2], ds.test_x)
        bundle = tgt.request_projection(2)
    ref = fit_bundle(ds.stats(), 2)
    assert bundle.v.tobytes() == ref.v.tobytes()
    assert bundle.zeta == ref.zeta
    assert np.array_equal(pred, classify(score(ref, ds.test_x)))


def test_bytes_sent_scale_with_p_not_n(server, rng):
    sizes = {}
    for n in (10, 1000):
        with CentralClient("127.0.0.1", server.port) as c:
            target_client_run(c, n, rng.standard_normal((40, n)), rng.standard_normal((40, n)), request=False)
            sizes[n] = c.bytes_sent
    assert sizes[10] == sizes[1000]
    # preamble + REGISTER frame + UPLOAD frame with four length-p vectors
    assert sizes[10] == len(PREAMBLE) + (5 + 18) + (5 + 4 + 2 * (8 + 16 * 40))


def test_error_frames_are_surfaced(server, rng):
    with CentralClient("127.0.0.1", server.port) as c:
        c.register(1, 5, 4, 4)
        with pytest.raises(RemoteError) as exc:
            c.request_projection(1)
        assert exc.value.code == ErrorCode.MISSING_UPLOADS
        # the connection stays usable after an ERROR frame
        c.upload(task_stats(1, rng.standard_normal((5, 4)), rng.standard_normal((5, 4))))
        assert c.request_projection(1).p == 5


def test_wrong_dimension_fails_before_sending(server, rng):
    with CentralClient("127.0.0.1", server.port) as c:
        sent = c.bytes_sent
        with pytest.raises(StructuralError):
            target_client_run(c, 1, rng.standard_normal((5, 4)), rng.standard_normal((5, 4)), rng.standard_normal((6, 3)))
        assert c.bytes_sent == sent
    assert server.registry.snapshot().registrations == {}


def test_wait_for_missing_uploads(server, rng):
    with CentralClient("127.0.0.1", server.port) as src:
        src.register(1, 5, 6, 6)
    def late_upload():
        with CentralClient("127.0.0.1", server.port) as c:
            c.upload(task_stats(1, rng.standard_normal((5, 6)), rng.standard_normal((5, 6))))
    timer = threading.Timer(0.3, late_upload)
    timer.start()
    with CentralClient("127.0.0.1", server.port) as tgt:
        tgt.register(2, 5, 6, 6)
        tgt.upload(task_stats(2, np.random.default_rng(1).standard_normal((5, 6)), np.random.default_rng(2).standard_normal((5, 6))))
        assert tgt.request_projection(2, wait=5.0).p == 5
    timer.join()


def test_server_absent_is_transport_error():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(TransportError):
        CentralClient("127.0.0.1", port, timeout=2)


def _raw(port, data):
    with socket.create_connection(("127.0.0.1", port), timeout=5) as s:
        s.sendall(data)
        s.shutdown(socket.SHUT_WR)
        chunks = []
        while chunk := s.recv(65536):
            chunks.append(chunk)
    buf = b"".join(chunks)
    out = []
    while buf:
        length, msg_type = struct.unpack_from("<IB", buf)
        out.append(decode_payload(msg_type, buf[HEADER.size : HEADER.size + length]))
        buf = buf[HEADER.size + length :]
    return out


@pytest.mark.parametrize(
    "data,code",
    [
        (b"NOPE\x01", ErrorCode.BAD_MAGIC),
        (b"MTLS\x09", ErrorCode.BAD_VERSION),
        (PREAMBLE + struct.pack("<IB", 0, 0x33), ErrorCode.UNKNOWN_TYPE),
        (PREAMBLE + struct.pack("<IB", 3, 0x01) + b"abc", ErrorCode.MALFORMED_PAYLOAD),
        (PREAMBLE + struct.pack("<IB", 100, 0x01) + b"abc", ErrorCode.TRUNCATED),
        (PREAMBLE + struct.pack("<IB", 2**31, 0x01), ErrorCode.LENGTH_OVERFLOW),
    ],
)
def test_server_maps_malformed_frames(server, data, code):
    replies = _raw(server.port, data)
    assert isinstance(replies[0], Error) and replies[0].code == code


def test_server_survives_bad_payload(server):
    data = PREAMBLE + struct.pack("<IB", 3, 0x01) + b"abc" + encode(Register(4, 2, 3, 5, 5))
    replies = _raw(server.port, data)
    assert replies[0].code == ErrorCode.MALFORMED_PAYLOAD
    assert replies[1] == Ack(4)
