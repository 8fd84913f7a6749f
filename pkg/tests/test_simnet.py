"""Simulator-level properties: determinism, accounting, fault plumbing."""

import json
import math
import random

import pytest

from powerstore import simnet
from powerstore.simnet import (
    SimConfig, format_config, make_delay_fn, make_value, parse_config,
    parse_faults, run)


def small(**over):
    kw = dict(mode="sw", writers=1, readers=2, writes=3, reads=3,
              value_size=48, seed=3)
    kw.update(over)
    return SimConfig(**kw)


def test_same_seed_reproduces_the_log_byte_for_byte():
    a, b = run(small()), run(small())
    assert a.export_ndjson() == b.export_ndjson()
    assert a.log_digest() == b.log_digest()


def test_different_seeds_diverge():
    assert run(small(seed=1)).log_digest() != run(small(seed=2)).log_digest()


@pytest.mark.parametrize("mode", ["sw", "mw"])
def test_proof_scheme_does_not_steer_the_schedule(mode):
    for seed in range(6):
        cfg = dict(mode=mode, writers=1 if mode == "sw" else 2, readers=2,
                   writes=3, reads=4, seed=seed,
                   faults=("byz_server:1:fabricate_candidate",
                           "byz_reader:202:replayed_candidates"))
        a = run(SimConfig(pow_name="hash", **cfg))
        b = run(SimConfig(pow_name="shamir", **cfg))
        assert a.history_signature() == b.history_signature(), seed
        assert a.metrics["ticks"] == b.metrics["ticks"]


def test_config_text_round_trips():
    cfg = small(mode="mw", writers=2, pow_name="shamir", t=2,
                faults=("byz_server:1:mute", "byz_reader:202:flood_writebacks"),
                delay="pareto:20,4", log_wire=True)
    assert parse_config(format_config(cfg)) == cfg


def test_config_parser_accepts_comments_and_blank_lines():
    cfg = parse_config("# workload\nmode=sw\n\nwrites=5\npow=shamir\n")
    assert cfg.writes == 5 and cfg.pow_name == "shamir"


def test_config_parser_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("mode=sw\nwriterz=2\n")
    with pytest.raises(ValueError, match="expected key=value"):
        parse_config("mode sw\n")


@pytest.mark.parametrize("directive,msg", [
    ("byz_server:9:mute", "no server"),
    ("byz_server:1:jam", "unknown server behavior"),
    ("byz_reader:205:garbage_filter_sets", "no reader"),
    ("byz_reader:202:jam", "unknown reader behavior"),
    ("crash_writer:103:after_store:1", "no writer"),
    ("crash_writer:101:mid_flight:1", "crash point must be"),
    ("sabotage:1:x", "bad fault directive"),
])
def test_fault_directives_are_validated(directive, msg):
    with pytest.raises(ValueError, match=msg):
        parse_faults((directive,), s=4, writers=2, readers=2)


def test_fault_plan_groups_by_kind():
    plan = parse_faults(("byz_server:2:mute", "byz_reader:202:flood_writebacks",
                         "crash_writer:101:after_store:2"),
                        s=4, writers=1, readers=2)
    assert plan.byz_servers == {2: "mute"}
    assert plan.byz_readers == {202: "flood_writebacks"}
    assert plan.crash_writers == {101: ("store", 2)}


def test_uniform_delay_stays_in_bounds():
    fn = make_delay_fn("uniform:2,5")
    rng = random.Random(0)
    assert {fn(rng) for _ in range(200)} == {2, 3, 4, 5}


def test_pareto_delay_is_heavy_tailed_but_positive():
    fn = make_delay_fn("pareto:20,4")
    rng = random.Random(0)
    draws = [fn(rng) for _ in range(2000)]
    assert min(draws) >= 1
    assert 15 < sum(draws) / len(draws) < 25


@pytest.mark.parametrize("spec", ["uniform:0,5", "uniform:9,2", "gauss:1,2",
                                  "pareto:0,4", "uniform:a,b"])
def test_bad_delay_specs_are_rejected(spec):
    with pytest.raises(ValueError):
        make_delay_fn(spec)


@pytest.mark.parametrize("kw", [
    dict(mode="xy"),
    dict(mode="sw", writers=2),
    dict(mode="mw", t=1, s=3),
])
def test_impossible_configs_are_rejected(kw):
    with pytest.raises(ValueError):
        simnet.Simulation(small(**{"writers": 1, **kw}))


def test_crashed_writer_leaves_one_pending_operation():
    res = run(small(writes=3, faults=("crash_writer:101:after_complete:0",)))
    assert res.metrics["completed_writes"] == 2
    pend = [r for r in res.history if r.res_seq is None]
    assert [r.kind for r in pend] == ["write"]
    assert res.healthy  # a crashed writer is not a liveness violation


def test_too_many_mute_servers_deadlock_the_run():
    res = run(small(faults=("byz_server:1:mute", "byz_server:2:mute")))
    assert not res.healthy
    assert res.deadlock["reason"] == "no events left"
    assert res.deadlock["pending"]


def test_every_sent_message_is_delivered():
    res = run(small(seed=11))
    assert res.metrics["msgs_sent"] == res.metrics["msgs_delivered"]
    assert res.metrics["dropped_malformed"] == 0


def test_garbage_traffic_is_dropped_not_crashed():
    res = run(small(readers=2, faults=("byz_reader:202:garbage_filter_sets",)))
    assert res.healthy
    assert res.metrics["dropped_malformed"] > 0


def test_data_bytes_match_the_fragment_layout():
    for t, size in ((1, 48), (2, 4096)):
        res = run(small(t=t, value_size=size, writes=3, reads=0, seed=5))
        s = 3 * t + 1
        per_write = s * (10 + math.ceil(size / (t + 1)))
        assert res.metrics["data_bytes"] == per_write * 3


def test_wire_taps_are_opt_in():
    assert run(small()).taps == []
    res = run(small(log_wire=True))
    assert res.taps and all(e["nbytes"] > 0 for e in res.taps)


def _store_commitments(res):
    from powerstore import codec
    return [e["commitment"] for e in res.taps if e["kind"] == codec.STORE]


def test_secret_share_commitments_are_redacted_in_wire_logs():
    cfg = dict(writes=2, reads=0, log_wire=True, seed=2)
    shamir = run(small(pow_name="shamir", **cfg))
    assert set(_store_commitments(shamir)) == {"<redacted>"}
    tapped = run(small(pow_name="shamir", tap_confidential=True, **cfg))
    assert "<redacted>" not in _store_commitments(tapped)
    hashed = run(small(pow_name="hash", **cfg))
    assert "<redacted>" not in _store_commitments(hashed)


def test_flooded_sw_servers_accumulate_candidates():
    flood = ("byz_reader:202:flood_writebacks",)
    sw = run(small(faults=flood, writes=2, reads=2))
    assert sw.metrics["lc_set_peak"] > 4
    mw = run(small(mode="mw", writers=2, faults=flood, writes=2, reads=2))
    assert mw.metrics["lc_set_peak"] == 0


def test_exported_log_is_jsonable_and_ordered():
    res = run(small(seed=7))
    seqs = []
    for line in res.export_ndjson().splitlines():
        ev = json.loads(line)
        seqs.append(ev["seq"])
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)


def test_make_value_is_distinct_per_writer_and_index():
    vals = {make_value(cid, k, 32) for cid in (101, 102) for k in range(4)}
    assert len(vals) == 8
    assert all(len(v) == 32 for v in vals)


def test_run_result_meta_names_the_correct_processes():
    res = run(small(faults=("byz_server:2:mute",)))
    assert res.meta["correct_servers"] == (1, 3, 4)
    assert res.meta["correct_readers"] == (201, 202)
