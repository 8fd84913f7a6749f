"""Protocol-wide domain types and the candidate predicates.

A candidate is the metadata (timestamp, proof token[, MAC vector]) naming a
potentially completed write. Servers judge candidates with valid_*; readers
judge them with safe/invalid/highcand over the reply table of their second
round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .crypto import HASH_POW, Polynomial, verify_vec_entry

Token = Union[bytes, Polynomial]

BOTTOM = None  # the initial register value; never writable


@dataclass(frozen=True, order=False)
class Timestamp:
    """Write timestamp ordered lexicographically on (num, pid); the MAC tag
    never participates in comparison. Single-writer timestamps use pid 0 and
    an empty tag."""

    num: int
    pid: int = 0
    tag: bytes = b""

    def key(self):
        return (self.num, self.pid)

    def __lt__(self, other):
        return self.key() < other.key()

    def __le__(self, other):
        return self.key() <= other.key()

    def __gt__(self, other):
        return self.key() > other.key()

    def __ge__(self, other):
        return self.key() >= other.key()


TS0 = Timestamp(0, 0, b"")


def token_canonical(token: Optional[Token]) -> bytes:
    """Scheme-tagged canonical bytes, used for deterministic ordering."""
    if token is None:
        return b"\x00"
    if isinstance(token, Polynomial):
        return b"\x02" + token.to_bytes()
    return b"\x01" + token


@dataclass(frozen=True)
class Candidate:
    """(ts, token[, vec]) tuple written back by clients and held in lc/LC."""

    ts: Timestamp
    token: Optional[Token] = None
    vec: Optional[tuple] = None  # S MAC tags, multi-writer mode only

    def sort_key(self):
        return (self.ts.key(), token_canonical(self.token),
                self.vec if self.vec is not None else ())

    @property
    def is_zero(self) -> bool:
        return self.ts.key() == TS0.key()


C0 = Candidate(TS0, None, None)


@dataclass(frozen=True)
class HistEntry:
    """One server's stored state for a timestamp: fragment, cross-checksum,
    proof commitment (token hash or private share), and MW MAC vector."""

    fr: object  # erasure.Fragment
    cc: tuple
    commitment: object
    vec: Optional[tuple] = None


def ts_key(ts: Timestamp):
    return ts.key()


# ---------------------------------------------------------------------------
# Server-side validity
# ---------------------------------------------------------------------------

def valid_sw(candidate: Candidate, hist: Mapping, scheme=HASH_POW) -> bool:
    """True iff the history entry at candidate.ts commits to its token."""
    if candidate.token is None:
        return False
    entry = hist.get(candidate.ts.key())
    if entry is None:
        return False
    return scheme.verify(candidate.token, entry.commitment)


def valid_by_hist(candidate: Candidate, hist: Mapping, scheme=HASH_POW) -> bool:
    return valid_sw(candidate, hist, scheme)


def valid_mw(candidate: Candidate, hist: Mapping, server_index: int,
             group_key: bytes, scheme=HASH_POW) -> bool:
    """History branch or the per-server MAC branch over (ts, token digest)."""
    if valid_by_hist(candidate, hist, scheme):
        return True
    if candidate.token is None or candidate.vec is None:
        return False
    if len(candidate.vec) < server_index:
        return False
    entry = candidate.vec[server_index - 1]
    if not isinstance(entry, bytes):
        return False
    return verify_vec_entry(group_key, candidate.ts.num, candidate.ts.pid,
                            scheme.token_digest(candidate.token), entry)


# ---------------------------------------------------------------------------
# Reader-side reply table and predicates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reply:
    """One server's filter-round answer: (ts, fr, cc[, vec]) with the
    fragment's hash precomputed at arrival."""

    ts: Timestamp
    fr: object
    cc: Optional[tuple]
    vec: Optional[tuple] = None
    fr_hash: Optional[bytes] = None


def safe_witness(candidate: Candidate, replies: Mapping, t: int):
    """The t+1 lexicographically smallest server ids agreeing on candidate.ts
    with one cross-checksum/vec and self-consistent fragments, or None.

    Returns (ids, cc, vec). Grouping by (cc, vec) realizes the pairwise
    agreement clauses; the own-slot hash check uses each server's index.
    """
    groups = {}
    for sid in sorted(replies):
        rep = replies[sid]
        if rep.ts.key() != candidate.ts.key() or rep.cc is None:
            continue
        if rep.fr is None or len(rep.cc) < sid:
            continue
        if rep.fr_hash != rep.cc[sid - 1]:
            continue
        groups.setdefault((rep.cc, rep.vec), []).append(sid)
    best = None
    for (cc, vec), ids in groups.items():
        if len(ids) >= t + 1:
            pick = tuple(ids[: t + 1])
            if best is None or pick < best[0]:
                best = (pick, cc, vec)
    return best


def safe(candidate: Candidate, replies: Mapping, t: int) -> bool:
    return safe_witness(candidate, replies, t) is not None


def invalid(candidate: Candidate, replies: Mapping, s: int, t: int) -> bool:
    """At least S-t responders reported a timestamp strictly below c.ts."""
    low = sum(1 for rep in replies.values() if rep.ts < candidate.ts)
    return low >= s - t


def highcand(candidate: Candidate, candidates) -> bool:
    """No member of the candidate set has a strictly greater timestamp."""
    ck = candidate.ts.key()
    return all(c.ts.key() <= ck for c in candidates)


# ---------------------------------------------------------------------------
# Operation records (the checker's input)
# ---------------------------------------------------------------------------

@dataclass
class OperationRecord:
    """One client operation as the harness observed it. res_seq/res_tick stay
    None for operations pending at the end of a run (crashed writers)."""

    client: int
    kind: str  # "write" | "read"
    value: Optional[bytes]
    inv_seq: int
    inv_tick: int
    res_seq: Optional[int] = None
    res_tick: Optional[int] = None
    rounds: Optional[int] = None
    repair_sent: bool = False
    ts: Optional[Timestamp] = None  # the write's timestamp, set on completion

    @property
    def complete(self) -> bool:
        return self.res_seq is not None
