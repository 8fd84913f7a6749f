"""Single-fault protocol variants used to prove the oracles can go red.

Each entry swaps one class for a subtly broken subclass. The harness runs a
mutant under a scenario that provokes the weakened guard and expects at least
one checker or monitor to fire; a mutant that survives means a hole in the
oracles, not a feature.
"""

from __future__ import annotations

from . import codec
from .client import MwReader, MwWriter, SwReader
from .core import safe_witness
from .server import MwServer, SwServer


class RepairSkipValid(MwServer):
    """Adopts repair candidates on timestamp alone."""

    def _on_repair(self, msg):
        cand = msg.cand
        if cand.ts > self.lc.ts:
            self._accept(cand, "repair")
        return codec.RepairAck(msg.tsr)


class ClockSkipMac(MwWriter):
    """Believes any clock reply without checking its tag."""

    def _clock_ts_ok(self, ts_i):
        return True


class SafeQuorumMinusOneSw(SwReader):
    """Accepts a candidate one witness short of the safety quorum."""

    def _safe(self, cand):
        return safe_witness(cand, self.R, self.t - 1)


class SafeQuorumMinusOneMw(MwReader):
    """Accepts a candidate one witness short of the safety quorum."""

    def _safe(self, cand):
        return safe_witness(cand, self.R, self.t - 1)


class ValidSkipNonceSw(SwServer):
    """Trusts any candidate whose timestamp appears in history."""

    def _valid(self, cand):
        return cand.ts.key() in self.hist


class ValidSkipNonceMw(MwServer):
    """Trusts any candidate whose timestamp appears in history."""

    def _valid(self, cand):
        return cand.ts.key() in self.hist


class LcNonMonotoneSw(SwServer):
    """Overwrites lc with whatever complete arrives last."""

    def _on_complete(self, msg):
        self._accept(self._completed_candidate(msg), "complete")
        return codec.CompleteAck(msg.ts)


class LcNonMonotoneMw(MwServer):
    """Overwrites lc with whatever complete arrives last."""

    def _on_complete(self, msg):
        self._accept(self._completed_candidate(msg), "complete")
        return codec.CompleteAck(msg.ts)


class DecodeSkipCcSw(SwReader):
    """Feeds unchecked fragments to the decoder."""

    check_cc = False


class DecodeSkipCcMw(MwReader):
    """Feeds unchecked fragments to the decoder."""

    check_cc = False


REGISTRY = {
    "repair_skip_valid": {"mw_server": RepairSkipValid},
    "clock_skip_mac": {"mw_writer": ClockSkipMac},
    "safe_quorum_minus_one": {"sw_reader": SafeQuorumMinusOneSw,
                              "mw_reader": SafeQuorumMinusOneMw},
    "valid_skip_nonce": {"sw_server": ValidSkipNonceSw,
                         "mw_server": ValidSkipNonceMw},
    "lc_non_monotone": {"sw_server": LcNonMonotoneSw,
                        "mw_server": LcNonMonotoneMw},
    "decode_skip_cc": {"sw_reader": DecodeSkipCcSw,
                       "mw_reader": DecodeSkipCcMw},
}


def resolve(name):
    """Class overrides for a mutant name; empty name means the real thing."""
    if not name:
        return {}
    if name not in REGISTRY:
        raise ValueError("unknown mutant %r" % name)
    return REGISTRY[name]
