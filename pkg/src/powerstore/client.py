"""Client state machines: writers and readers driven by ack deliveries.

Each client runs one operation at a time. An operation advances through its
rounds as acks arrive; stale acks (wrong phase, wrong timestamp, wrong read
counter) are dropped on the floor. A crashed writer stops mid-broadcast and
never invokes its completion callback.
"""

from __future__ import annotations

import logging

from . import codec
from .core import (
    BOTTOM,
    C0,
    TS0,
    Candidate,
    Reply,
    Timestamp,
    highcand,
    invalid,
    safe_witness,
)
from .crypto import (
    HASH_POW,
    digest,
    make_vec,
    tag_timestamp,
    verify_timestamp,
)
from .erasure import cross_checksum, decode as ec_decode, encode as ec_encode, fragment_to_bytes

log = logging.getLogger(__name__)


class ProtocolInvariantError(AssertionError):
    """A state the protocol guarantees unreachable for correct clients."""


# ---------------------------------------------------------------------------
# Pure read-side procedures, shared by both modes
# ---------------------------------------------------------------------------

def restore_value(ts: Timestamp, replies, t: int, s: int, check_cc=True) -> bytes:
    """Decode the value at ts from the reply table: pick the cross-checksum
    vouched by t+1 servers, keep fragments matching their own slot of it."""
    groups = {}
    for sid in sorted(replies):
        rep = replies[sid]
        if rep.ts.key() == ts.key() and rep.cc is not None:
            groups.setdefault(rep.cc, []).append(sid)
    witnessed = sorted(cc for cc, ids in groups.items() if len(ids) >= t + 1)
    if not witnessed:
        raise ProtocolInvariantError("restore without a cross-checksum witness")
    cc = witnessed[0]
    frs = []
    for sid in sorted(replies):
        rep = replies[sid]
        if rep.ts.key() != ts.key() or rep.fr is None:
            continue
        if check_cc and not (len(cc) >= sid and rep.fr_hash == cc[sid - 1]):
            continue
        frs.append(rep.fr)
    return ec_decode(frs, t + 1, s)


def agreed_vec(ts: Timestamp, replies, t: int) -> tuple:
    """The MAC vector vouched by t+1 servers answering for ts."""
    groups = {}
    for sid in sorted(replies):
        rep = replies[sid]
        if rep.ts.key() == ts.key() and rep.vec is not None:
            groups.setdefault(rep.vec, []).append(sid)
    witnessed = sorted(vec for vec, ids in groups.items() if len(ids) >= t + 1)
    if not witnessed:
        raise ProtocolInvariantError("repair without a vector witness")
    return witnessed[0]


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------

class ClientBase:
    role = None

    def __init__(self, cid, s, t, scheme=HASH_POW, keyring=None, send=None,
                 rng=None, tracer=None):
        self.cid = cid
        self.s = s
        self.t = t
        self.scheme = scheme
        self.keyring = keyring
        self.send = send  # send(server_id, msg)
        self.rng = rng
        self.tracer = tracer
        self.busy = False
        self.crashed = False
        self.phase = None
        self.rounds = 0
        self._done = None

    def trace(self, etype, **fields):
        if self.tracer is not None:
            self.tracer(etype, client=self.cid, **fields)

    def _broadcast(self, msg):
        for sid in range(1, self.s + 1):
            if self.crashed:
                return
            self.send(sid, msg)

    def _finish(self, **stats):
        cb, self._done = self._done, None
        self.busy = False
        self.phase = None
        if cb is not None:
            cb(**stats)

    def on_message(self, sid, msg):
        if self.crashed or not self.busy:
            return
        handler = getattr(self, "_on_%s" % codec.KIND_NAMES[msg.kind].lower(), None)
        if handler is not None:
            handler(sid, msg)


class WriterBase(ClientBase):
    role = "writer"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.ts = TS0
        self.token = None
        self.vec = None
        self._acks = set()
        # ("store"|"complete", k): crash after k sends of that phase
        self.crash_plan = None
        self._sends_left = None

    def _maybe_crash(self, phase):
        if self.crash_plan is None or self.crash_plan[0] != phase:
            return False
        if self._sends_left is None:
            self._sends_left = self.crash_plan[1]
        if self._sends_left <= 0:
            self.crashed = True
            self.trace("crash")
            return True
        self._sends_left -= 1
        return False

    def _send_round(self, phase, build):
        for sid in range(1, self.s + 1):
            if self._maybe_crash(phase):
                return
            self.send(sid, build(sid))

    def _start_store(self, value):
        self.token, commitments = self.scheme.mint(self.rng, self.t, self.s)
        frs = ec_encode(value, self.t + 1, self.s)
        cc = cross_checksum(frs)
        self.vec = self._make_vec()
        self.phase = "store"
        self._acks = set()
        self.rounds += 1
        self._send_round("store", lambda sid: codec.Store(
            self.ts, frs[sid - 1], cc, commitments[sid - 1], self.vec))

    def _on_store_ack(self, sid, msg):
        if self.phase != "store" or msg.ts.key() != self.ts.key():
            return
        self._acks.add(sid)
        if len(self._acks) >= self.s - self.t:
            self._start_complete()

    def _start_complete(self):
        self.phase = "complete"
        self._acks = set()
        self.rounds += 1
        msg = codec.Complete(self.ts, self.token, self.vec)
        self._send_round("complete", lambda sid: msg)

    def _on_complete_ack(self, sid, msg):
        if self.phase != "complete" or msg.ts.key() != self.ts.key():
            return
        self._acks.add(sid)
        if len(self._acks) >= self.s - self.t:
            self._finish(rounds=self.rounds)


class SwWriter(WriterBase):
    """Two rounds per write: store fragments, then reveal the token."""

    def _make_vec(self):
        return None

    def write(self, value, done):
        assert not self.busy and not self.crashed
        self.busy = True
        self._done = done
        self.rounds = 0
        self.ts = Timestamp(self.ts.num + 1, 0, b"")
        self._start_store(value)


class MwWriter(WriterBase):
    """Three rounds per write: clock, store, reveal."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._value = None
        self._clock_echo = None
        self._clock_best = None

    def _make_vec(self):
        return make_vec(self.keyring, self.ts.num, self.ts.pid,
                        self.scheme.token_digest(self.token))

    def write(self, value, done):
        assert not self.busy and not self.crashed
        self.busy = True
        self._done = done
        self.rounds = 1
        self._value = value
        self.phase = "clock"
        self._acks = set()
        self._clock_echo = self.ts
        self._clock_best = self.ts
        self._broadcast(codec.Clock(self.ts))

    def _clock_ts_ok(self, ts_i):
        return verify_timestamp(self.keyring.writer_key, ts_i.num, ts_i.pid,
                                ts_i.tag)

    def _on_clock_ack(self, sid, msg):
        if self.phase != "clock" or msg.echo != self._clock_echo:
            return
        self._acks.add(sid)
        ts_i = msg.ts
        if ts_i > self._clock_best and self._clock_ts_ok(ts_i):
            self._clock_best = ts_i
        if len(self._acks) >= self.s - self.t:
            num = self._clock_best.num + 1
            tag = tag_timestamp(self.keyring.writer_key, num, self.cid)
            self.ts = Timestamp(num, self.cid, tag)
            self._start_store(self._value)
            self._value = None


class ReaderBase(ClientBase):
    role = "reader"
    check_cc = True  # fault-injection hook: restore's own-slot hash filter

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.tsr = 0
        self.C = set()
        self.Q = set()
        self.R = {}
        self.repaired = False
        self._selected = None
        self._value = None

    def read(self, done):
        assert not self.busy and not self.crashed
        self.busy = True
        self._done = done
        self.tsr += 1
        self.C = set()
        self.Q = set()
        self.R = {}
        self.repaired = False
        self._selected = None
        self._value = None
        self.phase = "collect"
        self.rounds = 1
        self._broadcast(codec.Collect(self.tsr))

    def _on_collect_ack(self, sid, msg):
        if self.phase != "collect" or msg.tsr != self.tsr:
            return
        self.Q.add(sid)
        self.C |= {c for c in msg.cands if c.ts > TS0}
        if len(self.Q) >= self.s - self.t:
            self._start_filter()

    def _start_filter(self):
        self.phase = "filter"
        self.rounds += 1
        cands = tuple(sorted(self.C, key=lambda c: c.sort_key()))
        self._broadcast(codec.Filter(self.tsr, cands))

    def _safe(self, cand):
        return safe_witness(cand, self.R, self.t)

    def _on_filter_ack(self, sid, msg):
        if self.phase != "filter" or msg.tsr != self.tsr:
            return
        fr_hash = digest(fragment_to_bytes(msg.fr)) if msg.fr is not None else None
        self.R[sid] = Reply(msg.ts, msg.fr, msg.cc, msg.vec, fr_hash)
        self.C = {c for c in self.C if not invalid(c, self.R, self.s, self.t)}
        if len(self.R) < self.s - self.t:
            return
        if not self.C:
            self._value = BOTTOM
            self._after_restore()
            return
        ready = [c for c in self.C
                 if highcand(c, self.C) and self._safe(c)]
        if not ready:
            return
        c = max(ready, key=lambda c: c.sort_key())
        self._selected = c
        self.trace("select", ts=c.ts, token=c.token)
        self._value = restore_value(c.ts, self.R, self.t, self.s,
                                    check_cc=self.check_cc)
        self._after_restore()

    def _finish_read(self):
        self._finish(value=self._value, rounds=self.rounds,
                     repaired=self.repaired)


class SwReader(ReaderBase):
    """Two rounds per read: collect candidates, then filter and restore."""

    def _after_restore(self):
        self._finish_read()


class MwReader(ReaderBase):
    """Collect and filter as in the single-writer mode, plus a repair round
    when the selected candidate's MAC vector fails its integrity check."""

    def _after_restore(self):
        c = self._selected
        if c is None:
            self._finish_read()
            return
        vec = agreed_vec(c.ts, self.R, self.t)
        # an adversary can plant same-timestamp variants that differ only in
        # their vector; repair only when no collected variant carries the
        # agreed one, so the variant tiebreak cannot steer the round count
        variants = {v.vec for v in self.C if v.ts.key() == c.ts.key()}
        if vec in variants:
            self._finish_read()
            return
        self.repaired = True
        self.trace("repair_sent", ts=c.ts)
        self.phase = "repair"
        self.rounds += 1
        self._repair_acks = set()
        self._broadcast(codec.Repair(self.tsr, Candidate(c.ts, c.token, vec)))

    def _on_repair_ack(self, sid, msg):
        if self.phase != "repair" or msg.tsr != self.tsr:
            return
        self._repair_acks.add(sid)
        if len(self._repair_acks) >= self.s - self.t:
            self._finish_read()


def make_client(mode, role, cid, **kwargs):
    if role == "writer":
        cls = SwWriter if mode == "sw" else MwWriter
    else:
        cls = SwReader if mode == "sw" else MwReader
    return cls(cid, **kwargs)
