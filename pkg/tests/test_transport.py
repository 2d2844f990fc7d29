"""Wire protocol: codec, chunk planning, status machine, blocking wait."""

import math
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from procwasm import transport as tp
from procwasm.errors import KernelGone, Overflow, ProtocolState
from procwasm.transport import (
    AuxBuffer,
    ChunkPlan,
    StatusTraceChecker,
    SyscallRequest,
    SyscallResponse,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
    plan_chunks,
    post_and_wait,
)

CAP = 8192  # smallest legal buffer: 4096 header + 4096 data


def make_buffer(capacity=CAP, **kw):
    return AuxBuffer(capacity, **kw)


class TestAuxBuffer:
    def test_capacity_must_be_aligned(self):
        with pytest.raises(ValueError):
            AuxBuffer(8192 + 1)

    def test_capacity_must_meet_minimum(self):
        with pytest.raises(ValueError):
            AuxBuffer(4096)

    def test_data_capacity_excludes_header(self):
        aux = make_buffer(16384)
        assert aux.data_capacity == 16384 - 4096

    def test_new_buffer_is_zeroed_and_idle(self):
        aux = make_buffer()
        assert aux.status() == tp.ST_IDLE
        assert aux.read(0, CAP) == bytes(CAP)

    def test_raw_rw_round_trip(self):
        aux = make_buffer()
        aux.write(4096, b"hello")
        assert aux.read(4096, 5) == b"hello"

    def test_raw_access_bounds(self):
        aux = make_buffer()
        with pytest.raises(ValueError):
            aux.read(CAP - 1, 2)
        with pytest.raises(ValueError):
            aux.write(CAP, b"x")


class TestCodec:
    def test_request_round_trip(self):
        aux = make_buffer()
        aux.write(4096, b"hello")
        req = SyscallRequest(4, [3, 4096, 5], [(4096, 5)])
        encode_request(aux, req)
        assert aux.status() == tp.ST_REQUEST
        assert decode_request(aux) == req

    def test_response_round_trip(self):
        aux = make_buffer()
        encode_request(aux, SyscallRequest(3, [0, 4096, 64]))
        resp = SyscallResponse(64, 0, [(4096, 64)])
        encode_response(aux, resp)
        assert aux.status() == tp.ST_DONE
        assert decode_response(aux) == resp

    def test_error_response_round_trip(self):
        aux = make_buffer()
        encode_request(aux, SyscallRequest(2, [99]))
        resp = SyscallResponse(-8, 8)
        encode_response(aux, resp)
        assert decode_response(aux) == resp

    def test_golden_request_bytes(self):
        # The header layout is frozen: any change here is an ABI break.
        aux = make_buffer()
        aux.write(4096, b"hello")
        encode_request(aux, SyscallRequest(4, [3, 4096, 5], [(4096, 5)]))
        head = aux.read(0, 108)
        assert head[0:4] == (1).to_bytes(4, "little")          # status REQUEST
        assert head[4:8] == (4).to_bytes(4, "little")          # syscall_no
        assert head[8:12] == (3).to_bytes(4, "little")         # arg_count
        assert head[12:16] == bytes(4)                         # errno 0
        assert head[16:24] == bytes(8)                         # return 0
        assert head[32:40] == (3).to_bytes(8, "little")        # arg0
        assert head[40:48] == (4096).to_bytes(8, "little")     # arg1
        assert head[48:56] == (5).to_bytes(8, "little")        # arg2
        assert head[56:96] == bytes(40)                        # unused args
        assert head[96:100] == (1).to_bytes(4, "little")       # payload count
        assert head[100:104] == (4096).to_bytes(4, "little")   # desc offset
        assert head[104:108] == (5).to_bytes(4, "little")      # desc length

    def test_golden_negative_arg_bytes(self):
        aux = make_buffer()
        encode_request(aux, SyscallRequest(6, [-1]))
        assert aux.read(32, 8) == b"\xff" * 8

    def test_golden_response_bytes(self):
        aux = make_buffer()
        encode_request(aux, SyscallRequest(3, [0]))
        encode_response(aux, SyscallResponse(-22, 22, [(4100, 7)]))
        assert aux.read(0, 4) == (2).to_bytes(4, "little")     # status DONE
        assert aux.read(12, 4) == (22).to_bytes(4, "little")   # errno
        assert aux.read(16, 8) == (-22).to_bytes(8, "little", signed=True)
        assert aux.read(96, 4) == (1).to_bytes(4, "little")
        assert aux.read(100, 8) == (4100).to_bytes(4, "little") + (7).to_bytes(4, "little")

    def test_decode_request_on_idle_buffer(self):
        with pytest.raises(ProtocolState):
            decode_request(make_buffer())

    def test_encode_request_twice(self):
        aux = make_buffer()
        encode_request(aux, SyscallRequest(1))
        with pytest.raises(ProtocolState):
            encode_request(aux, SyscallRequest(1))

    def test_encode_response_requires_pending_request(self):
        with pytest.raises(ProtocolState):
            encode_response(make_buffer(), SyscallResponse(0))

    def test_decode_response_requires_done(self):
        aux = make_buffer()
        encode_request(aux, SyscallRequest(1))
        with pytest.raises(ProtocolState):
            decode_response(aux)

    def test_payload_exceeding_data_capacity(self):
        aux = make_buffer()
        with pytest.raises(Overflow):
            encode_request(
                aux, SyscallRequest(4, [], [(4096, aux.data_capacity + 1)]))

    def test_payload_total_exceeding_data_capacity(self):
        aux = make_buffer(16384)
        half = aux.data_capacity // 2
        payloads = [(4096, half), (4096 + half, half + 1)]
        with pytest.raises(Overflow):
            encode_request(aux, SyscallRequest(4, [], payloads))

    def test_payload_in_header_region_rejected(self):
        aux = make_buffer()
        with pytest.raises(Overflow):
            encode_request(aux, SyscallRequest(4, [], [(0, 8)]))

    def test_overlapping_payloads_rejected(self):
        aux = make_buffer()
        with pytest.raises(Overflow):
            encode_request(
                aux, SyscallRequest(4, [], [(4096, 16), (4104, 16)]))

    def test_errno_requires_negative_return(self):
        aux = make_buffer()
        encode_request(aux, SyscallRequest(1))
        with pytest.raises(ProtocolState):
            encode_response(aux, SyscallResponse(0, errno=22))

    def test_too_many_args(self):
        with pytest.raises(ProtocolState):
            encode_request(make_buffer(), SyscallRequest(1, list(range(9))))


def requests(capacity=CAP):
    data_cap = capacity - 4096
    args = st.lists(
        st.integers(min_value=-(2 ** 63), max_value=2 ** 63 - 1), max_size=8)

    @st.composite
    def payloads(draw):
        n = draw(st.integers(min_value=0, max_value=4))
        lengths = [draw(st.integers(min_value=0, max_value=data_cap // 4))
                   for _ in range(n)]
        offs, cursor = [], 4096
        for ln in lengths:
            offs.append(cursor)
            cursor += ln
        return list(zip(offs, lengths))

    return st.builds(
        SyscallRequest,
        st.integers(min_value=0, max_value=2 ** 32 - 1),
        args,
        payloads())


class TestCodecProperties:
    @settings(max_examples=300, deadline=None)
    @given(requests())
    def test_request_identity(self, req):
        aux = make_buffer()
        encode_request(aux, req)
        assert decode_request(aux) == req

    @settings(max_examples=300, deadline=None)
    @given(
        st.integers(min_value=-(2 ** 63), max_value=2 ** 63 - 1),
        st.integers(min_value=0, max_value=2 ** 32 - 1),
        st.integers(min_value=0, max_value=4096))
    def test_response_identity(self, rv, errno, out_len):
        if errno != 0 and rv >= 0:
            rv = -abs(rv) - 1 if rv >= 0 else rv
        aux = make_buffer()
        encode_request(aux, SyscallRequest(1))
        resp = SyscallResponse(rv, errno, [(4096, out_len)])
        encode_response(aux, resp)
        assert decode_response(aux) == resp


class TestPlanChunks:
    def test_two_full_buffers_plus_two(self):
        cap = 67108864
        plan = plan_chunks(2 * cap + 2, cap)
        assert plan.lengths == [67108864, 67108864, 2]

    def test_zero_total(self):
        assert plan_chunks(0, 65536).lengths == []

    def test_200k_at_64k(self):
        assert plan_chunks(200000, 65536).lengths == [65536, 65536, 65536, 3392]

    @pytest.mark.parametrize("total", [65535, 65536, 65537, 131072])
    def test_boundaries(self, total):
        cap = 65536
        plan = plan_chunks(total, cap)
        assert sum(plan.lengths) == total
        assert len(plan) == math.ceil(total / cap)
        assert all(c <= cap for c in plan)
        assert all(c == cap for c in plan.lengths[:-1])

    def test_rejects_zero_capacity(self):
        with pytest.raises(ValueError):
            plan_chunks(10, 0)

    @settings(max_examples=500, deadline=None)
    @given(st.data())
    def test_invariants(self, data):
        cap = data.draw(st.integers(min_value=1, max_value=10 ** 9))
        total = data.draw(st.integers(min_value=0, max_value=cap * 4096))
        plan = plan_chunks(total, cap)
        assert sum(plan.lengths) == total
        assert len(plan.lengths) == math.ceil(total / cap)
        assert all(0 < c <= cap for c in plan.lengths)
        assert all(c == cap for c in plan.lengths[:-1])


class TestPostAndWait:
    def serve(self, aux, handler, delay=0.0):
        """Run a one-shot responder in another thread."""
        def kernel():
            aux.wait_status(tp.ST_REQUEST)
            if delay:
                time.sleep(delay)
            req = decode_request(aux)
            encode_response(aux, handler(req))
        t = threading.Thread(target=kernel, daemon=True)
        t.start()
        return t

    def test_immediate_reply(self):
        aux = make_buffer()
        t = self.serve(aux, lambda req: SyscallResponse(req.args[0] * 2))
        resp = post_and_wait(aux, SyscallRequest(7, [21]))
        t.join()
        assert resp.return_value == 42
        assert aux.status() == tp.ST_IDLE

    def test_delayed_reply_blocks_caller(self):
        aux = make_buffer()
        t = self.serve(aux, lambda req: SyscallResponse(1), delay=0.05)
        start = time.perf_counter()
        resp = post_and_wait(aux, SyscallRequest(1))
        elapsed = time.perf_counter() - start
        t.join()
        assert resp.return_value == 1
        assert elapsed >= 0.05

    def test_kernel_gone_before_reply(self):
        aux = make_buffer()

        def kernel():
            aux.wait_status(tp.ST_REQUEST)
            aux.close()

        t = threading.Thread(target=kernel, daemon=True)
        t.start()
        with pytest.raises(KernelGone):
            post_and_wait(aux, SyscallRequest(1))
        t.join()

    def test_post_on_closed_buffer(self):
        aux = make_buffer()
        aux.close()
        with pytest.raises(KernelGone):
            post_and_wait(aux, SyscallRequest(1))

    def test_on_request_hook_fires(self):
        aux = make_buffer()
        fired = threading.Event()

        def kernel():
            fired.wait(2)
            encode_response(aux, SyscallResponse(0))

        aux.on_request = fired.set
        t = threading.Thread(target=kernel, daemon=True)
        t.start()
        resp = post_and_wait(aux, SyscallRequest(1))
        t.join()
        assert resp.return_value == 0


class TestStatusTrace:
    def test_clean_cycle(self):
        checker = StatusTraceChecker()
        aux = make_buffer(trace=checker.record)
        t = TestPostAndWait().serve(aux, lambda req: SyscallResponse(0))
        post_and_wait(aux, SyscallRequest(1))
        t.join()
        assert checker.ok
        assert checker.transitions == 3

    def test_violation_detected(self):
        checker = StatusTraceChecker()
        aux = make_buffer(trace=checker.record)
        aux.set_status(tp.ST_DONE)  # IDLE -> DONE is illegal
        assert not checker.ok
        assert checker.violations == [(tp.ST_IDLE, tp.ST_DONE)]

    def test_interleaved_stress(self):
        # Two contexts, many cycles, random-ish payload sizes; the trace
        # must show nothing but IDLE->REQUEST->DONE->IDLE.
        checker = StatusTraceChecker()
        aux = make_buffer(16384, trace=checker.record)
        rounds = 2000

        def kernel():
            for _ in range(rounds):
                aux.wait_status(tp.ST_REQUEST)
                req = decode_request(aux)
                encode_response(aux, SyscallResponse(req.args[0]))

        t = threading.Thread(target=kernel, daemon=True)
        t.start()
        for i in range(rounds):
            resp = post_and_wait(aux, SyscallRequest(3, [i]))
            assert resp.return_value == i
        t.join()
        assert checker.ok
        assert checker.transitions == 3 * rounds


class TestChunkedTransfer:
    def test_reassembly_is_byte_identical(self):
        # Simulate the shim side of a chunked write: each planned chunk
        # crosses the buffer separately and the far side reassembles.
        import random
        rng = random.Random(7)
        aux = make_buffer(8192)
        data = bytes(rng.randrange(256) for _ in range(3 * aux.data_capacity + 7))
        received = bytearray()

        def kernel():
            while len(received) < len(data):
                aux.wait_status(tp.ST_REQUEST)
                req = decode_request(aux)
                off, length = req.payloads[0]
                received.extend(aux.read(off, length))
                encode_response(aux, SyscallResponse(length))

        t = threading.Thread(target=kernel, daemon=True)
        t.start()
        sent = 0
        plan = plan_chunks(len(data), aux.data_capacity)
        for chunk_len in plan:
            aux.write(4096, data[sent:sent + chunk_len])
            resp = post_and_wait(
                aux, SyscallRequest(4, [1, 4096, chunk_len], [(4096, chunk_len)]))
            assert resp.return_value == chunk_len
            sent += chunk_len
        t.join()
        assert len(plan) == 4
        assert bytes(received) == data
