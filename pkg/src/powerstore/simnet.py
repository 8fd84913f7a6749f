"""Deterministic discrete-event simulation of the storage protocols.

One heap of (tick, seq) events drives everything: message deliveries, client
operation starts, adversary pumps, and state-reset timers. Four independent
RNG streams (delays, crypto, workload, adversary) are derived from the run
seed so that, e.g., swapping the proof scheme never perturbs the schedule.
Every message crosses the wire as encoded bytes and is decoded on delivery.
"""

from __future__ import annotations

import dataclasses
import heapq
import json
import logging
import math
import random
from dataclasses import dataclass, field

from . import behaviors, codec, mutants
from .client import (
    MwReader,
    MwWriter,
    ProtocolInvariantError,
    SwReader,
    SwWriter,
)
from .codec import MalformedMessage
from .core import Candidate, OperationRecord, Timestamp
from .crypto import MERSENNE_61, KeyRing, Polynomial, ShamirShare, digest, pow_scheme
from .erasure import ErasureError, Fragment, fragment_to_bytes
from .server import MwServer, SwServer

log = logging.getLogger(__name__)

SERVER_BEHAVIORS = ("stale_lc", "fabricate_candidate", "corrupt_vec",
                    "revert_state", "mute", "equivocate_fragments")
READER_BEHAVIORS = ("garbage_filter_sets", "replayed_candidates",
                    "flood_writebacks")

WRITER_ID_BASE = 100  # writers are 101, 102, ...; readers 201, 202, ...
READER_ID_BASE = 200


@dataclass
class SimConfig:
    """One run's knobs; parse_config/format_config round-trip the file form."""

    mode: str = "sw"
    pow_name: str = "hash"
    t: int = 1
    s: int = 0  # 0 means 3t+1
    writers: int = 1
    readers: int = 2
    writes: int = 3
    reads: int = 3
    value_size: int = 64
    delay: str = "uniform:1,10"
    seed: int = 0
    faults: tuple = ()
    shamir_q: int = MERSENNE_61
    log_wire: bool = False
    tap_confidential: bool = False
    adversary_budget: int = 48
    max_ticks: int = 1_000_000
    mutant: str = ""

    def resolved_s(self) -> int:
        return self.s if self.s else 3 * self.t + 1


_INT_KEYS = {"t", "s", "writers", "readers", "writes", "reads", "value_size",
             "seed", "shamir_q", "adversary_budget", "max_ticks"}
_BOOL_KEYS = {"log_wire", "tap_confidential"}
_STR_KEYS = {"mode", "pow", "delay", "mutant"}


def parse_config(text: str) -> SimConfig:
    """Key=value lines; # starts a comment; fault= may repeat."""
    kwargs = {}
    faults = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("line %d: expected key=value, got %r" % (lineno, raw))
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "fault":
            faults.append(value)
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key in _BOOL_KEYS:
            if value not in ("true", "false"):
                raise ValueError("line %d: %s wants true/false" % (lineno, key))
            kwargs[key] = value == "true"
        elif key == "pow":
            kwargs["pow_name"] = value
        elif key in _STR_KEYS:
            kwargs[key] = value
        else:
            raise ValueError("line %d: unknown key %r" % (lineno, key))
    if faults:
        kwargs["faults"] = tuple(faults)
    return SimConfig(**kwargs)


def format_config(cfg: SimConfig) -> str:
    default = SimConfig()
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if value == getattr(default, f.name):
            continue
        if f.name == "faults":
            lines.extend("fault=%s" % d for d in value)
        elif f.name == "pow_name":
            lines.append("pow=%s" % value)
        elif f.name in _BOOL_KEYS:
            lines.append("%s=%s" % (f.name, "true" if value else "false"))
        else:
            lines.append("%s=%s" % (f.name, value))
    return "\n".join(lines) + "\n"


def make_delay_fn(spec: str):
    """uniform:a,b draws integer ticks in [a,b]; pareto:mean,var matches the
    first two moments with a shifted Pareto, rounded up to a whole tick."""
    kind, _, args = spec.partition(":")
    if kind == "uniform":
        a, b = (int(x) for x in args.split(","))
        if not 1 <= a <= b:
            raise ValueError("uniform delay wants 1 <= a <= b")
        return lambda rng: rng.randint(a, b)
    if kind == "pareto":
        mean, var = (float(x) for x in args.split(","))
        if mean <= 0 or var <= 0:
            raise ValueError("pareto delay wants positive mean and variance")
        alpha = 1.0 + math.sqrt(1.0 + mean * mean / var)
        xm = mean * (alpha - 1.0) / alpha
        return lambda rng: max(1, round(xm * rng.paretovariate(alpha)))
    raise ValueError("unknown delay model %r" % spec)


@dataclass
class FaultPlan:
    byz_servers: dict = field(default_factory=dict)  # sid -> behavior name
    byz_readers: dict = field(default_factory=dict)  # cid -> behavior name
    crash_writers: dict = field(default_factory=dict)  # cid -> (phase, k)


def parse_faults(directives, s, writers, readers) -> FaultPlan:
    plan = FaultPlan()
    for d in directives:
        parts = d.split(":")
        if parts[0] == "byz_server" and len(parts) == 3:
            sid = int(parts[1])
            if not 1 <= sid <= s:
                raise ValueError("no server %d in %r" % (sid, d))
            if parts[2] not in SERVER_BEHAVIORS:
                raise ValueError("unknown server behavior in %r" % d)
            plan.byz_servers[sid] = parts[2]
        elif parts[0] == "byz_reader" and len(parts) == 3:
            cid = int(parts[1])
            if not READER_ID_BASE < cid <= READER_ID_BASE + readers:
                raise ValueError("no reader %d in %r" % (cid, d))
            if parts[2] not in READER_BEHAVIORS:
                raise ValueError("unknown reader behavior in %r" % d)
            plan.byz_readers[cid] = parts[2]
        elif parts[0] == "crash_writer" and len(parts) == 4:
            cid = int(parts[1])
            if not WRITER_ID_BASE < cid <= WRITER_ID_BASE + writers:
                raise ValueError("no writer %d in %r" % (cid, d))
            if parts[2] not in ("after_store", "after_complete"):
                raise ValueError("crash point must be after_store or after_complete")
            plan.crash_writers[cid] = (parts[2][len("after_"):], int(parts[3]))
        else:
            raise ValueError("bad fault directive %r" % d)
    return plan


def _stream_seed(seed: int, name: str) -> int:
    return int.from_bytes(digest(("%d:%s" % (seed, name)).encode())[:8], "big")


def make_value(cid: int, k: int, size: int) -> bytes:
    head = b"%d.%d|" % (cid, k)
    if len(head) >= size:
        return head
    return head + b"x" * (size - len(head))


# ---------------------------------------------------------------------------
# JSON export helpers
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, bytes):
        return "0x" + v.hex()
    if isinstance(v, Timestamp):
        return {"num": v.num, "pid": v.pid, "tag": "0x" + v.tag.hex()}
    if isinstance(v, Candidate):
        return {"ts": _jsonable(v.ts), "token": _jsonable(v.token),
                "vec": _jsonable(v.vec)}
    if isinstance(v, Polynomial):
        return {"poly": {"q": v.q, "coeffs": list(v.coeffs)}}
    if isinstance(v, ShamirShare):
        return {"share": [v.x, v.y, v.q]}
    if isinstance(v, Fragment):
        return {"fragment": [v.index, v.orig_len, "0x" + v.payload.hex()]}
    if isinstance(v, (tuple, list, set, frozenset)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def event_to_json(ev: dict) -> str:
    return json.dumps(_jsonable(ev), sort_keys=True, separators=(",", ":"))


@dataclass
class RunResult:
    config: SimConfig
    s: int
    t: int
    history: list  # OperationRecord, in invocation order
    events: list
    metrics: dict
    monitor: object
    crash_reason: object
    deadlock: object
    byz_servers: dict
    byz_readers: dict
    taps: list
    meta: dict

    def export_ndjson(self) -> str:
        return "\n".join(event_to_json(ev) for ev in self.events) + "\n"

    def log_digest(self) -> str:
        return digest(self.export_ndjson().encode()).hex()

    def history_signature(self):
        """Schedule-and-outcome fingerprint, independent of token bytes."""
        sig = []
        for rec in self.history:
            sig.append((rec.client, rec.kind, rec.value, rec.inv_tick,
                        rec.res_tick, rec.rounds, rec.repair_sent,
                        rec.ts.key() if rec.ts is not None else None))
        return tuple(sig)

    @property
    def healthy(self) -> bool:
        return (self.monitor is None and self.crash_reason is None
                and self.deadlock is None)


class Simulation:
    def __init__(self, config: SimConfig):
        self.cfg = config
        self.t = config.t
        self.s = config.resolved_s()
        if self.s < 3 * self.t + 1:
            raise ValueError("need s >= 3t+1, got s=%d t=%d" % (self.s, self.t))
        if config.mode not in ("sw", "mw"):
            raise ValueError("mode must be sw or mw")
        if config.mode == "sw" and config.writers > 1:
            raise ValueError("single-writer mode takes at most one writer")
        self.scheme = pow_scheme(config.pow_name, config.shamir_q)
        self.rng = {name: random.Random(_stream_seed(config.seed, name))
                    for name in ("delays", "crypto", "workload", "adversary")}
        self.delay_fn = make_delay_fn(config.delay)
        self.now = 0
        self._seq = 0
        self.heap = []
        self.events = []
        self.taps = []
        self.metrics = {
            "msgs_sent": 0, "msgs_delivered": 0, "bytes_sent": 0,
            "dropped_malformed": 0, "data_bytes": 0, "completed_writes": 0,
            "completed_reads": 0, "repairs": 0, "lc_set_peak": 0,
            "ticks": 0, "accepts": 0,
        }
        self.history = []
        self.monitor = None
        self.crash_reason = None
        self.deadlock = None
        self._store_frag_bytes = {}  # (writer, ts.key()) -> bytes in flight

        plan = parse_faults(config.faults, self.s,
                            config.writers, config.readers)
        self.plan = plan
        self.keyring = (KeyRing.generate(self.s, self.rng["crypto"])
                        if config.mode == "mw" else None)
        classes = self._classes(config)

        self.servers = {}
        self.correct_servers = set()
        server_cls = classes["server"]
        for sid in range(1, self.s + 1):
            base = server_cls(sid, self.s, self.t, scheme=self.scheme,
                              keyring=self.keyring, tracer=self.trace)
            name = plan.byz_servers.get(sid)
            if name is None:
                self.servers[sid] = base
                self.correct_servers.add(sid)
            else:
                self.servers[sid] = behaviors.make_server_behavior(
                    name, base, self)

        self.clients = {}
        self.roles = {}
        self.ops_left = {}
        self.op_count = {}
        self.correct_readers = set()
        self.writer_ids = []
        self.reader_ids = []
        for i in range(1, config.writers + 1):
            cid = WRITER_ID_BASE + i
            self.writer_ids.append(cid)
            self.roles[cid] = "writer"
            self.clients[cid] = classes["writer"](
                cid, s=self.s, t=self.t, scheme=self.scheme,
                keyring=self.keyring, send=self._client_send_fn(cid),
                rng=self.rng["crypto"], tracer=self.trace)
            self.ops_left[cid] = config.writes
            self.op_count[cid] = 0
        for i in range(1, config.readers + 1):
            cid = READER_ID_BASE + i
            self.reader_ids.append(cid)
            self.roles[cid] = "reader"
            name = plan.byz_readers.get(cid)
            if name is None:
                self.clients[cid] = classes["reader"](
                    cid, s=self.s, t=self.t, scheme=self.scheme,
                    keyring=None, send=self._client_send_fn(cid),
                    rng=self.rng["crypto"], tracer=self.trace)
                self.ops_left[cid] = config.reads
                self.op_count[cid] = 0
                self.correct_readers.add(cid)
            else:
                self.clients[cid] = behaviors.make_reader_behavior(
                    name, cid, self)

    def _classes(self, config):
        overrides = mutants.resolve(config.mutant)
        mode = config.mode
        return {
            "server": overrides.get(
                "%s_server" % mode, SwServer if mode == "sw" else MwServer),
            "writer": overrides.get(
                "%s_writer" % mode, SwWriter if mode == "sw" else MwWriter),
            "reader": overrides.get(
                "%s_reader" % mode, SwReader if mode == "sw" else MwReader),
        }

    # -- plumbing ----------------------------------------------------------

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def trace(self, etype, **fields):
        ev = {"seq": self.next_seq(), "tick": self.now, "type": etype}
        ev.update(fields)
        self.events.append(ev)

    def schedule(self, delay, action):
        heapq.heappush(self.heap, (self.now + delay, self.next_seq(), action))

    def _client_send_fn(self, cid):
        return lambda sid, msg: self.send_to_server(cid, sid, msg)

    def send_to_server(self, cid, sid, payload):
        """Client-to-server edge; payload may be raw bytes from an adversary."""
        if isinstance(payload, bytes):
            wire = payload
            kind = wire[0] if wire else 0
        else:
            wire = codec.encode(payload)
            kind = payload.kind
            if kind == codec.STORE and cid in self.ops_left:
                key = (cid, payload.ts.key())
                self._store_frag_bytes[key] = (
                    self._store_frag_bytes.get(key, 0)
                    + len(fragment_to_bytes(payload.fr)))
        self._count_send(cid, sid, kind, wire)
        self._tap(cid, sid, payload, wire)
        self.schedule(self.delay_fn(self.rng["delays"]),
                      ("to_server", cid, sid, wire))

    def send_to_client(self, sid, cid, msg):
        # servers only ever answer clients; there is no server-to-server edge
        assert cid in self.clients, "server reply must target a client"
        wire = codec.encode(msg)
        self._count_send(sid, cid, msg.kind, wire)
        self.schedule(self.delay_fn(self.rng["delays"]),
                      ("to_client", sid, cid, wire))

    def _count_send(self, src, dst, kind, wire):
        self.metrics["msgs_sent"] += 1
        self.metrics["bytes_sent"] += len(wire)
        if self.cfg.log_wire:
            self.trace("send", src=src, dst=dst, kind=kind, nbytes=len(wire))

    def _tap(self, cid, sid, payload, wire):
        """What the adversary observes of client-to-server traffic. With the
        proof-sharing scheme, the commitment rides a confidential channel, so
        it is redacted between correct endpoints unless taps are forced."""
        if not self.cfg.log_wire:
            return
        entry = {"src": cid, "dst": sid, "nbytes": len(wire)}
        if isinstance(payload, bytes):
            entry["kind"] = payload[0] if payload else 0
            entry["raw"] = payload
        else:
            entry["kind"] = payload.kind
            if payload.kind == codec.STORE:
                redact = (self.scheme.name == "shamir"
                          and not self.cfg.tap_confidential
                          and sid in self.correct_servers
                          and self.roles.get(cid) == "writer"
                          and self.plan.byz_readers.get(cid) is None)
                entry["commitment"] = ("<redacted>" if redact
                                       else payload.commitment)
        self.taps.append(entry)

    # -- event dispatch ----------------------------------------------------

    def _dispatch(self, action):
        kind = action[0]
        if kind == "to_server":
            _, cid, sid, wire = action
            self._deliver_to_server(cid, sid, wire)
        elif kind == "to_client":
            _, sid, cid, wire = action
            self._deliver_to_client(sid, cid, wire)
        elif kind == "op":
            self._start_op(action[1])
        elif kind == "adv":
            self.clients[action[1]].pump()
        elif kind == "timer":
            self.servers[action[1]].on_timer()

    def _deliver_to_server(self, cid, sid, wire):
        self.metrics["msgs_delivered"] += 1
        try:
            msg = codec.decode(wire)
        except MalformedMessage:
            self.metrics["dropped_malformed"] += 1
            return
        if self.cfg.log_wire:
            self.trace("deliver", src=cid, dst=sid, kind=msg.kind)
        server = self.servers[sid]
        correct = sid in self.correct_servers
        prev_lc = server.lc.ts.key() if correct else None
        reply = server.handle(msg, self.roles[cid])
        if correct:
            if server.lc.ts.key() < prev_lc and self.monitor is None:
                self.monitor = "lc regressed at server %d: %r -> %r" % (
                    sid, prev_lc, server.lc.ts.key())
                self.trace("monitor", server=sid, detail=self.monitor)
            if len(server.lc_set) > self.metrics["lc_set_peak"]:
                self.metrics["lc_set_peak"] = len(server.lc_set)
        if reply is not None:
            self.send_to_client(sid, cid, reply)

    def _deliver_to_client(self, sid, cid, wire):
        self.metrics["msgs_delivered"] += 1
        try:
            msg = codec.decode(wire)
        except MalformedMessage:
            self.metrics["dropped_malformed"] += 1
            return
        if self.cfg.log_wire:
            self.trace("deliver", src=sid, dst=cid, kind=msg.kind)
        self.clients[cid].on_message(sid, msg)

    # -- workload ----------------------------------------------------------

    def _start_op(self, cid):
        client = self.clients[cid]
        if client.crashed or self.ops_left.get(cid, 0) <= 0:
            return
        assert not client.busy
        self.ops_left[cid] -= 1
        self.op_count[cid] += 1
        if self.roles[cid] == "writer":
            value = make_value(cid, self.op_count[cid], self.cfg.value_size)
            if (cid in self.plan.crash_writers and self.ops_left[cid] == 0):
                client.crash_plan = self.plan.crash_writers[cid]
            rec = OperationRecord(client=cid, kind="write", value=value,
                                  inv_seq=self.next_seq(), inv_tick=self.now)
            self.history.append(rec)
            self.trace("invoke", client=cid, op="write", value=value)

            def done(rounds):
                rec.res_seq = self.next_seq()
                rec.res_tick = self.now
                rec.rounds = rounds
                rec.ts = client.ts
                self.metrics["completed_writes"] += 1
                self.metrics["data_bytes"] += self._store_frag_bytes.pop(
                    (cid, client.ts.key()), 0)
                self.trace("respond", client=cid, op="write", ts=client.ts)
                self._schedule_next_op(cid)

            client.write(value, done)
        else:
            rec = OperationRecord(client=cid, kind="read", value=None,
                                  inv_seq=self.next_seq(), inv_tick=self.now)
            self.history.append(rec)
            self.trace("invoke", client=cid, op="read")

            def done(value, rounds, repaired):
                rec.res_seq = self.next_seq()
                rec.res_tick = self.now
                rec.rounds = rounds
                rec.repair_sent = repaired
                rec.value = value
                self.metrics["completed_reads"] += 1
                if repaired:
                    self.metrics["repairs"] += 1
                self.trace("respond", client=cid, op="read", value=value)
                self._schedule_next_op(cid)

            client.read(done)

    def _schedule_next_op(self, cid):
        if self.ops_left.get(cid, 0) > 0:
            self.schedule(self.rng["workload"].randint(1, 6), ("op", cid))

    def ops_pending(self) -> bool:
        if any(n > 0 for n in self.ops_left.values()):
            return True
        return any(rec.res_seq is None
                   and not self.clients[rec.client].crashed
                   for rec in self.history)

    # -- run ---------------------------------------------------------------

    def run(self) -> RunResult:
        for cid in self.writer_ids + self.reader_ids:
            if cid in self.ops_left:
                self.schedule(self.rng["workload"].randint(0, 4), ("op", cid))
        for cid in sorted(self.plan.byz_readers):
            self.clients[cid].arm()
        for sid in sorted(self.plan.byz_servers):
            arm = getattr(self.servers[sid], "arm", None)
            if arm is not None:
                arm()

        overran = False
        while self.heap:
            tick, _, action = heapq.heappop(self.heap)
            if tick > self.cfg.max_ticks:
                overran = True
                break
            self.now = tick
            try:
                self._dispatch(action)
            except (ProtocolInvariantError, ErasureError) as exc:
                self.crash_reason = "%s: %s" % (type(exc).__name__, exc)
                self.trace("client_crash", detail=self.crash_reason)
                break

        self.metrics["ticks"] = self.now
        self.metrics["accepts"] = sum(
            1 for ev in self.events if ev["type"] == "accept")
        if self.ops_pending() and self.crash_reason is None:
            self.deadlock = self._deadlock_report(overran)
            self.trace("deadlock", detail=self.deadlock)
        return RunResult(
            config=self.cfg, s=self.s, t=self.t, history=self.history,
            events=self.events, metrics=self.metrics, monitor=self.monitor,
            crash_reason=self.crash_reason, deadlock=self.deadlock,
            byz_servers=dict(self.plan.byz_servers),
            byz_readers=dict(self.plan.byz_readers),
            taps=self.taps,
            meta={
                "mode": self.cfg.mode, "pow": self.cfg.pow_name,
                "q": self.cfg.shamir_q, "t": self.t, "s": self.s,
                "correct_servers": tuple(sorted(self.correct_servers)),
                "correct_readers": tuple(sorted(self.correct_readers)),
                "writers": tuple(self.writer_ids),
            })

    def _deadlock_report(self, overran):
        pending = []
        for rec in self.history:
            if rec.res_seq is None and not self.clients[rec.client].crashed:
                client = self.clients[rec.client]
                pending.append({"client": rec.client, "op": rec.kind,
                                "phase": client.phase,
                                "rounds": client.rounds})
        return {
            "reason": "tick budget exhausted" if overran else "no events left",
            "pending": pending,
            "unstarted": {cid: n for cid, n in sorted(self.ops_left.items())
                          if n > 0},
            "servers": {sid: self.servers[sid].snapshot()
                        for sid in sorted(self.servers)},
        }


def run(config: SimConfig) -> RunResult:
    return Simulation(config).run()
