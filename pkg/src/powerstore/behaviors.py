"""Byzantine drop-ins: wrapped servers and adversarial reader drivers.

Server behaviors wrap a correct replica and distort what it says, or whether
it says anything at all; reader drivers skip the read protocol entirely and
pump forged traffic at the servers. Forgeries are derived from digest chains
or from fixed-width draws on the adversary stream, so a run's schedule stays
identical whichever proof scheme is active.
"""

from __future__ import annotations

import dataclasses
import logging

from . import codec
from .core import C0, TS0, Candidate, Timestamp
from .crypto import Polynomial, digest
from .erasure import Fragment, fragment_to_bytes

log = logging.getLogger(__name__)

HUGE_NUM = 1 << 40


def forge_token(raw: bytes, scheme):
    """A token that parses fine but verifies against nothing."""
    if scheme.name == "shamir":
        a = int.from_bytes(digest(raw + b"a"), "big") % scheme.q
        b = int.from_bytes(digest(raw + b"b"), "big") % scheme.q
        return Polynomial((a, b), scheme.q)
    return digest(raw + b"n")


def forge_vec(raw: bytes, s: int) -> tuple:
    return tuple(digest(raw + b"v%d" % i) for i in range(1, s + 1))


def forge_ts(raw: bytes, num: int, mode: str, pid: int) -> Timestamp:
    if mode == "sw":
        return Timestamp(num, 0, b"")
    return Timestamp(num, pid, digest(raw + b"t")[:16])


# ---------------------------------------------------------------------------
# Server behaviors
# ---------------------------------------------------------------------------

class ServerShell:
    """Delegating wrapper; subclasses distort selected handlers."""

    def __init__(self, base, sim):
        self.base = base
        self.sim = sim

    def __getattr__(self, name):
        return getattr(self.base, name)

    def handle(self, msg, role):
        return self.base.handle(msg, role)


class StaleLc(ServerShell):
    """Acknowledges writes but answers all read traffic from time zero."""

    def handle(self, msg, role):
        kind = msg.kind
        if kind == codec.COLLECT:
            return codec.CollectAck(msg.tsr, (C0,))
        if kind == codec.FILTER:
            return codec.FilterAck(msg.tsr, TS0, None, None, None)
        if kind == codec.CLOCK:
            return codec.ClockAck(msg.ts, TS0)
        if kind == codec.REPAIR:
            return codec.RepairAck(msg.tsr)
        return self.base.handle(msg, role)


class FabricateCandidate(ServerShell):
    """Invents a colossal candidate and a self-consistent record behind it."""

    def _forged(self, salt):
        sid = self.base.sid
        raw = digest(b"fab|%d|%d" % (sid, salt))
        mode = self.base.mode
        ts = forge_ts(raw, HUGE_NUM + salt, mode, sid)
        token = forge_token(raw, self.base.scheme)
        vec = forge_vec(raw, self.base.s) if mode == "mw" else None
        return Candidate(ts, token, vec), raw

    def _forged_record(self, raw):
        fr = Fragment(self.base.sid, 32, digest(raw + b"p"))
        cc = tuple(
            digest(fragment_to_bytes(fr)) if i == self.base.sid
            else digest(raw + b"c%d" % i)
            for i in range(1, self.base.s + 1))
        return fr, cc

    def handle(self, msg, role):
        kind = msg.kind
        if kind == codec.COLLECT:
            reply = self.base.handle(msg, role)
            cand, _ = self._forged(msg.tsr)
            return codec.CollectAck(msg.tsr, reply.cands + (cand,))
        if kind == codec.FILTER:
            self.base.handle(msg, role)  # keep state honest, lie in the reply
            cand, raw = self._forged(msg.tsr)
            fr, cc = self._forged_record(raw)
            return codec.FilterAck(msg.tsr, cand.ts, fr, cc, cand.vec)
        if kind == codec.CLOCK:
            cand, _ = self._forged(msg.ts.num)
            return codec.ClockAck(msg.ts, cand.ts)
        return self.base.handle(msg, role)


class CorruptVec(ServerShell):
    """Honest state, garbled MAC vectors on everything read-facing."""

    @staticmethod
    def _garble(vec):
        return tuple(digest(b"cv" + entry) for entry in vec)

    def handle(self, msg, role):
        reply = self.base.handle(msg, role)
        if reply is None:
            return None
        if msg.kind == codec.COLLECT:
            cands = tuple(
                dataclasses.replace(c, vec=self._garble(c.vec)) if c.vec else c
                for c in reply.cands)
            return dataclasses.replace(reply, cands=cands)
        if msg.kind == codec.FILTER and reply.vec is not None:
            return dataclasses.replace(reply, vec=self._garble(reply.vec))
        return reply


class RevertState(ServerShell):
    """Periodically forgets everything: a restarting disk with no log."""

    period = 47

    def arm(self):
        self.sim.schedule(self.period, ("timer", self.base.sid))

    def on_timer(self):
        base = self.base
        base.lc = C0
        base.lc_set = set()
        base.hist = {}
        base.hist_bytes = 0
        base.trace("revert")
        if self.sim.ops_pending():
            self.sim.schedule(self.period, ("timer", base.sid))


class Mute(ServerShell):
    """Receives everything, says nothing."""

    def handle(self, msg, role):
        self.base.dropped += 1
        return None


class EquivocateFragments(ServerShell):
    """Serves filter replies whose fragment bytes contradict the checksum."""

    def handle(self, msg, role):
        reply = self.base.handle(msg, role)
        if (msg.kind == codec.FILTER and reply is not None
                and reply.fr is not None):
            fr = reply.fr
            mask = digest(b"equiv" + fragment_to_bytes(fr))
            mask = (mask * (len(fr.payload) // len(mask) + 1))[:len(fr.payload)]
            garbled = bytes(a ^ b for a, b in zip(fr.payload, mask))
            return dataclasses.replace(
                reply, fr=Fragment(fr.index, fr.orig_len, garbled))
        return reply


_SERVER = {
    "stale_lc": StaleLc,
    "fabricate_candidate": FabricateCandidate,
    "corrupt_vec": CorruptVec,
    "revert_state": RevertState,
    "mute": Mute,
    "equivocate_fragments": EquivocateFragments,
}


def make_server_behavior(name, base, sim):
    return _SERVER[name](base, sim)


# ---------------------------------------------------------------------------
# Byzantine reader drivers
# ---------------------------------------------------------------------------

class ByzReader:
    """Common pump loop: a budgeted burst, then reschedule while ops run."""

    crashed = False
    busy = False

    def __init__(self, cid, sim):
        self.cid = cid
        self.sim = sim
        self.rng = sim.rng["adversary"]
        self.mode = sim.cfg.mode
        self.budget = sim.cfg.adversary_budget
        self.count = 0
        self.phase = "adversary"
        self.rounds = None

    def arm(self):
        self.sim.schedule(1 + self.rng.randint(0, 4), ("adv", self.cid))

    def on_message(self, sid, msg):
        pass

    def _all(self, payload):
        for sid in range(1, self.sim.s + 1):
            self.sim.send_to_server(self.cid, sid, payload)

    def pump(self):
        if self.budget <= 0 or not self.sim.ops_pending():
            return
        self.budget -= 1
        self.count += 1
        self._pump(self.rng.randbytes(32))
        self.sim.schedule(1 + self.rng.randint(0, 4), ("adv", self.cid))

    def _forged_cand(self, raw, num):
        ts = forge_ts(raw, num, self.mode, self.cid)
        token = forge_token(raw, self.sim.scheme)
        vec = forge_vec(raw, self.sim.s) if self.mode == "mw" else None
        return Candidate(ts, token, vec)


class GarbageFilterSets(ByzReader):
    """Forged filter and repair traffic, plus outright malformed bytes.

    Every burst sends one colossal candidate and one at a small, guessable
    timestamp (hoping to collide with a stored-but-unrevealed write)."""

    def _pump(self, raw):
        cand = self._forged_cand(raw, HUGE_NUM + self.count)
        low = self._forged_cand(digest(raw + b"lo"), 1 + self.count % 8)
        self._all(codec.Filter(self.count, (cand, low)))
        if self.mode == "mw":
            self._all(codec.Repair(self.count, cand))
        if self.count % 3 == 0:
            self._all(bytes([codec.FILTER]) + raw[:6])


class ReplayedCandidates(ByzReader):
    """Collects honestly, then replays what it saw with doctored tokens."""

    def __init__(self, cid, sim):
        super().__init__(cid, sim)
        self.stash = []

    def on_message(self, sid, msg):
        if msg.kind == codec.COLLECT_ACK:
            for c in msg.cands:
                if c.ts > TS0 and c not in self.stash:
                    self.stash.append(c)

    def _pump(self, raw):
        self._all(codec.Collect(self.count))
        if not self.stash:
            return
        # sort on the timestamp alone: token bytes differ across proof
        # schemes and must not steer the schedule
        pool = sorted(self.stash, key=lambda c: c.ts.key())
        pick = pool[self.count % len(pool)]
        fake = Candidate(pick.ts, forge_token(raw, self.sim.scheme), pick.vec)
        self._all(codec.Filter(self.count, (pick, fake)))


class FloodWritebacks(ByzReader):
    """Streams never-written candidates into the filter write-back path."""

    batch = 4

    def _pump(self, raw):
        cands = []
        for j in range(self.batch):
            seed = digest(raw + bytes([j]))
            num = (1 << 20) + self.count * self.batch + j
            cands.append(self._forged_cand(seed, num))
        self._all(codec.Filter(self.count, tuple(cands)))


_READER = {
    "garbage_filter_sets": GarbageFilterSets,
    "replayed_candidates": ReplayedCandidates,
    "flood_writebacks": FloodWritebacks,
}


def make_reader_behavior(name, cid, sim):
    return _READER[name](cid, sim)
