"""Replica handler semantics, one message at a time."""

import random

import pytest

from powerstore import codec
from powerstore.core import C0, Candidate, TS0, Timestamp
from powerstore.crypto import KeyRing, digest, make_vec, pow_scheme, tag_timestamp
from powerstore.erasure import cross_checksum, encode
from powerstore.server import make_server

S, T = 4, 1


def keyring():
    return KeyRing.generate(S, random.Random(9))


def build_write(scheme, num, pid=0, value=b"payload", ring=None, seed=5):
    """Everything a writer would send for one value at one timestamp."""
    token, commitments = scheme.mint(random.Random(seed), T, S)
    frs = encode(value, T + 1, S)
    cc = cross_checksum(frs)
    if ring is None:
        ts, vec = Timestamp(num, 0, b""), None
    else:
        ts = Timestamp(num, pid, tag_timestamp(ring.writer_key, num, pid))
        vec = make_vec(ring, num, pid, scheme.token_digest(token))
    return ts, token, frs, cc, commitments, vec


def store_at(server, parts, sid=None):
    ts, token, frs, cc, commitments, vec = parts
    sid = sid or server.sid
    ack = server.handle(
        codec.Store(ts, frs[sid - 1], cc, commitments[sid - 1], vec), "writer")
    assert isinstance(ack, codec.StoreAck) and ack.ts == ts
    return ts, token, vec


def sw_server(tracer=None):
    return make_server("sw", 1, S, T, scheme=pow_scheme("hash"), tracer=tracer)


def mw_server(ring, tracer=None, sid=1):
    return make_server("mw", sid, S, T, scheme=pow_scheme("hash"),
                       keyring=ring, tracer=tracer)


def test_role_mismatch_is_dropped():
    srv = sw_server()
    parts = build_write(srv.scheme, 1)
    ts, _, frs, cc, commitments, vec = parts
    msg = codec.Store(ts, frs[0], cc, commitments[0], vec)
    assert srv.handle(msg, "reader") is None
    assert srv.handle(codec.Collect(1), "writer") is None
    assert srv.dropped == 2
    assert not srv.hist


def test_kind_not_served_by_mode_is_dropped():
    srv = sw_server()
    assert srv.handle(codec.Clock(TS0), "writer") is None
    assert srv.dropped == 1


def test_store_populates_history():
    srv = sw_server()
    ts, _, _ = store_at(srv, build_write(srv.scheme, 1))
    assert ts.key() in srv.hist
    assert srv.hist_bytes > 0
    assert srv.lc == C0  # store alone never moves the accepted candidate


def test_complete_adopts_only_strictly_higher():
    srv = sw_server()
    ts1, token1, _ = store_at(srv, build_write(srv.scheme, 1))
    ts2, token2, _ = store_at(srv, build_write(srv.scheme, 2))
    assert isinstance(srv.handle(codec.Complete(ts2, token2, None), "writer"),
                      codec.CompleteAck)
    assert srv.lc.ts == ts2
    srv.handle(codec.Complete(ts1, token1, None), "writer")
    assert srv.lc.ts == ts2  # stale reveal does not regress
    srv.handle(codec.Complete(ts2, token2, None), "writer")
    assert srv.lc.ts == ts2


def test_sw_gc_promotes_highest_valid_and_prunes():
    srv = sw_server()
    p1 = build_write(srv.scheme, 1, seed=11)
    p2 = build_write(srv.scheme, 2, seed=12)
    ts1, token1, _ = store_at(srv, p1)
    ts2, token2, _ = store_at(srv, p2)
    garbage = Candidate(Timestamp(5, 0, b""), digest(b"bogus"), None)
    srv.lc_set = {Candidate(ts1, token1, None), Candidate(ts2, token2, None),
                  garbage}
    srv.gc()
    assert srv.lc.ts == ts2
    # promoted and historical candidates go; the unverifiable one stays
    assert srv.lc_set == {garbage}


def test_sw_collect_serves_gc_result_sorted():
    srv = sw_server()
    ts, token, _ = store_at(srv, build_write(srv.scheme, 1))
    srv.lc_set = {Candidate(ts, token, None)}
    ack = srv.handle(codec.Collect(3), "reader")
    assert ack.tsr == 3
    assert [c.ts for c in ack.cands] == [ts]
    assert srv.lc.ts == ts  # collect ran gc


def test_sw_filter_writes_back_then_serves_history():
    srv = sw_server()
    ts, token, _ = store_at(srv, build_write(srv.scheme, 1))
    srv.handle(codec.Complete(ts, token, None), "writer")
    good = Candidate(ts, token, None)
    fake = Candidate(Timestamp(7, 0, b""), digest(b"fake"), None)
    ack = srv.handle(codec.Filter(1, (fake, good)), "reader")
    assert ack.ts == ts and ack.vec is None
    assert ack.fr is not None and ack.cc is not None
    assert fake in srv.lc_set  # metadata write-back happens unconditionally
    assert srv.lc.ts == ts  # but filter never moves lc


def test_sw_filter_without_valid_candidate_serves_bottom():
    srv = sw_server()
    fake = Candidate(Timestamp(7, 0, b""), digest(b"fake"), None)
    ack = srv.handle(codec.Filter(2, (fake,)), "reader")
    assert ack.ts == TS0 and ack.fr is None and ack.cc is None


def test_mw_collect_serves_only_the_accepted_candidate():
    ring = keyring()
    srv = mw_server(ring)
    parts = build_write(srv.scheme, 1, pid=101, ring=ring)
    ts, token, vec = store_at(srv, parts)
    srv.handle(codec.Complete(ts, token, vec), "writer")
    ack = srv.handle(codec.Collect(1), "reader")
    assert [c.ts for c in ack.cands] == [ts]
    assert len(srv.lc_set) == 0  # no candidate set in this mode


def test_mw_clock_echoes_request_and_serves_lc():
    ring = keyring()
    srv = mw_server(ring)
    parts = build_write(srv.scheme, 3, pid=101, ring=ring)
    ts, token, vec = store_at(srv, parts)
    srv.handle(codec.Complete(ts, token, vec), "writer")
    probe = Timestamp(0, 102, b"")
    ack = srv.handle(codec.Clock(probe), "writer")
    assert ack.echo == probe and ack.ts == ts


def test_mw_filter_splits_writeback_and_return():
    ring = keyring()
    srv = mw_server(ring)
    parts = build_write(srv.scheme, 1, pid=101, ring=ring)
    ts, token, vec = store_at(srv, parts)
    garbled = Candidate(ts, token, tuple(digest(b"x" + e) for e in vec))
    ack = srv.handle(codec.Filter(1, (garbled,)), "reader")
    # history validates the token, so the garbled vector is adopted as lc
    assert srv.lc.ts == ts and srv.lc.vec == garbled.vec
    # but the reply is served from history with the stored genuine vector
    assert ack.ts == ts and ack.vec == vec


def test_mw_filter_mac_branch_accepts_unstored_candidate():
    ring = keyring()
    srv = mw_server(ring)
    parts = build_write(srv.scheme, 2, pid=101, ring=ring)
    ts, token, _, _, _, vec = parts
    cand = Candidate(ts, token, vec)  # never stored at this server
    ack = srv.handle(codec.Filter(1, (cand,)), "reader")
    assert srv.lc.ts == ts  # own-slot MAC vouches for the write-back
    assert ack.ts == TS0 and ack.fr is None  # nothing to serve from history


def test_mw_filter_rejects_forged_candidate():
    ring = keyring()
    srv = mw_server(ring)
    bogus = Candidate(Timestamp(9, 103, b"tag"), digest(b"t"),
                      tuple(digest(b"%d" % i) for i in range(S)))
    ack = srv.handle(codec.Filter(1, (bogus,)), "reader")
    assert srv.lc == C0 and ack.ts == TS0


def test_mw_repair_guard_and_unconditional_ack():
    ring = keyring()
    srv = mw_server(ring, sid=2)
    parts = build_write(srv.scheme, 2, pid=101, ring=ring)
    ts, token, _, _, _, vec = parts
    good = Candidate(ts, token, vec)
    ack = srv.handle(codec.Repair(1, good), "reader")
    assert isinstance(ack, codec.RepairAck) and srv.lc.ts == ts
    # lower-or-equal and unverifiable repairs are acked but not adopted
    ack = srv.handle(codec.Repair(2, good), "reader")
    assert isinstance(ack, codec.RepairAck) and srv.lc == Candidate(ts, token, vec)
    bogus = Candidate(Timestamp(8, 103, b"tag"), digest(b"z"), vec)
    ack = srv.handle(codec.Repair(3, bogus), "reader")
    assert isinstance(ack, codec.RepairAck) and srv.lc.ts == ts


def test_accept_paths_are_traced():
    events = []
    srv = sw_server(tracer=lambda etype, **f: events.append((etype, f)))
    ts, token, _ = store_at(srv, build_write(srv.scheme, 1))
    srv.handle(codec.Complete(ts, token, None), "writer")
    vias = [f["via"] for etype, f in events if etype == "accept"]
    assert vias == ["complete"]


def test_snapshot_reports_state_sizes():
    srv = sw_server()
    ts, token, _ = store_at(srv, build_write(srv.scheme, 1))
    srv.lc_set = {Candidate(ts, token, None)}
    snap = srv.snapshot()
    assert snap["hist_len"] == 1 and snap["lc_set_size"] == 1
    assert snap["lc_ts"] == TS0.key()


@pytest.mark.parametrize("mode", ["sw", "mw"])
def test_reader_kinds_reject_writer_role(mode):
    ring = keyring() if mode == "mw" else None
    srv = make_server(mode, 1, S, T, keyring=ring)
    assert srv.handle(codec.Filter(1, ()), "writer") is None
    assert srv.dropped == 1
