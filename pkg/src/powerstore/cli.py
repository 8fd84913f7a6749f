"""Command line front end: seeded sweeps, single-seed replays, cost benches.

Every run is reproducible from (scenario, seed); a failing sweep prints the
first bad seed plus the replay command that reproduces it byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import scenarios
from .simnet import SimConfig, format_config, parse_config, run

logger = logging.getLogger(__name__)


def _add_run_flags(parser, seeds=True):
    parser.add_argument("--scenario", help="catalog scenario name; omit to "
                        "describe an ad-hoc run with the flags below")
    parser.add_argument("--config", help="key=value file describing the run; "
                        "only the seed flags apply on top of it")
    if seeds:
        parser.add_argument("--seeds", type=int, default=20,
                            help="number of seeds to sweep (default 20)")
        parser.add_argument("--seed-start", type=int, default=0)
        parser.add_argument("--jobs", type=int, default=1,
                            help="worker processes for the sweep")
    else:
        parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--mode", choices=("sw", "mw"), default="sw",
                        help="ad-hoc runs only; scenarios pin their mode")
    parser.add_argument("--pow", choices=("hash", "shamir"), default="hash")
    parser.add_argument("--t", type=int, default=1,
                        help="tolerated byzantine servers")
    parser.add_argument("--value-size", type=int, default=64)
    parser.add_argument("--delay", default="uniform:1,10",
                        help="uniform:a,b or pareto:mean,var, in ticks")
    parser.add_argument("--fault", action="append", default=[],
                        help="fault directive, repeatable (ad-hoc runs only)")
    parser.add_argument("--writers", type=int, default=0)
    parser.add_argument("--readers", type=int, default=0)
    parser.add_argument("--writes", type=int, default=0)
    parser.add_argument("--reads", type=int, default=0)
    parser.add_argument("--out", help="write newline-delimited records here")


def _adhoc_scenario(args):
    return scenarios.Scenario(
        name="adhoc", summary="command line flags", mode=args.mode,
        faults=tuple(args.fault), writers=args.writers or 0,
        readers=args.readers or 2, writes=args.writes or 4,
        reads=args.reads or 4, delay=args.delay)


def _overrides(args):
    over = {"value_size": args.value_size}
    if args.scenario:
        # explicit workload flags override the scenario's defaults
        if args.delay != "uniform:1,10":
            over["delay"] = args.delay
        for key in ("writers", "readers", "writes", "reads"):
            if getattr(args, key):
                over[key] = getattr(args, key)
    return over


def _config_file_runs(args, seeds):
    with open(args.config) as fh:
        base = parse_config(fh.read())
    shim = scenarios.Scenario(name=os.path.basename(args.config),
                              summary="config file", mode=base.mode,
                              expect_repairs="any")
    return [scenarios.report_for(shim, run(replace(base, seed=seed)))
            for seed in seeds]


def _run_reports(args, seeds):
    if args.config:
        return _config_file_runs(args, seeds)
    over = _overrides(args)
    if args.scenario:
        tasks = [scenarios.task_for(args.scenario, seed, t=args.t,
                                    pow_name=args.pow, **over)
                 for seed in seeds]
        return scenarios.run_tasks(tasks, jobs=getattr(args, "jobs", 1))
    adhoc = _adhoc_scenario(args)
    reports = []
    for seed in seeds:
        result = run(adhoc.config(seed, t=args.t, pow_name=args.pow, **over))
        reports.append(scenarios.report_for(adhoc, result))
    return reports


def _single_result(args, seed):
    if args.config:
        with open(args.config) as fh:
            base = parse_config(fh.read())
        shim = scenarios.Scenario(name=os.path.basename(args.config),
                                  summary="config file", mode=base.mode,
                                  expect_repairs="any")
        return shim, run(replace(base, seed=seed))
    over = _overrides(args)
    if args.scenario:
        name, seed, t, pow_name, o = scenarios.task_for(
            args.scenario, seed, t=args.t, pow_name=args.pow, **over)
        sc = scenarios.CATALOG[name]
        return sc, run(sc.config(seed, t=t, pow_name=pow_name, **o))
    adhoc = _adhoc_scenario(args)
    return adhoc, run(adhoc.config(seed, t=args.t, pow_name=args.pow, **over))


def _replay_argv(args, report):
    parts = ["powerstore", "replay", "--seed", str(report["seed"])]
    if args.config:
        parts += ["--config", args.config]
        return " ".join(parts)
    if args.scenario:
        parts += ["--scenario", args.scenario]
    else:
        parts += ["--mode", args.mode]
        for d in args.fault:
            parts += ["--fault", d]
    parts += ["--t", str(args.t), "--pow", args.pow]
    return " ".join(parts)


def _fmt_rounds(values):
    return ",".join(str(v) for v in values) if values else "-"


def _write_ndjson(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_run(args):
    seeds = range(args.seed_start, args.seed_start + args.seeds)
    reports = _run_reports(args, seeds)
    if args.out:
        _write_ndjson(args.out, reports)
    name = args.scenario or (os.path.basename(args.config) if args.config
                             else "adhoc")
    total_repairs = sum(r["repairs"] for r in reports)
    bad = [r for r in reports if r["failures"]]
    print("scenario %s: %d seeds, %d ok, %d failed" %
          (name, len(reports), len(reports) - len(bad), len(bad)))
    print("  write rounds %s  read rounds %s  repairs %d  max |LC| %d" %
          (_fmt_rounds(sorted({v for r in reports for v in r["write_rounds"]})),
           _fmt_rounds(sorted({v for r in reports for v in r["read_rounds"]})),
           total_repairs, max(r["lc_set_peak"] for r in reports)))
    print("  msgs %d  wire bytes %d  dropped malformed %d" %
          (sum(r["msgs_sent"] for r in reports),
           sum(r["bytes_sent"] for r in reports),
           sum(r["dropped_malformed"] for r in reports)))
    expect_some = (args.scenario and args.scenario in scenarios.CATALOG and
                   scenarios.CATALOG[args.scenario].expect_repairs == "some")
    if expect_some and total_repairs == 0:
        print("FAIL: expected repair rounds, saw none")
        return 1
    if bad:
        first = bad[0]
        print("FAIL seed %d: %s" % (first["seed"], "; ".join(first["failures"])))
        print("reproduce with: %s" % _replay_argv(args, first))
        return 1
    print("PASS")
    return 0


def cmd_replay(args):
    scenario, result = _single_result(args, args.seed)
    report = scenarios.report_for(scenario, result)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(result.export_ndjson())
    print("config: %s" % " ".join(format_config(result.config).splitlines()))
    for rec in sorted(result.history, key=lambda r: r.inv_seq):
        state = "pending" if rec.res_seq is None else "done"
        print("  %s %s@%d ticks %s..%s rounds %s" %
              (rec.kind, state, rec.client, rec.inv_tick,
               rec.res_tick if rec.res_tick is not None else "-",
               rec.rounds if rec.rounds is not None else "-"))
    print("events %d  log digest %s" % (len(result.events), report["log_digest"]))
    if report["failures"]:
        print("FAIL: %s" % "; ".join(report["failures"]))
        return 1
    print("PASS")
    return 0


def _percentile(values, frac):
    ordered = sorted(values)
    return ordered[min(len(ordered) - 1, int(frac * len(ordered)))]


def cmd_bench(args):
    t_values = [int(v) for v in args.t_list.split(",")]
    sizes = [int(v) for v in args.sizes.split(",")]
    print("cost bench, %s mode, %s proofs, delays %s" %
          (args.mode, args.pow, args.delay))
    print("latencies are simulated ticks, not wall-clock throughput")
    header = ("t", "s", "value B", "data B/write", "ideal", "dev %",
              "write p50/p95", "read p50/p95", "msgs/op")
    rows = []
    for t in t_values:
        for size in sizes:
            writes, reads, ops = 2, 2, []
            wl, rl, data, msgs = [], [], 0, 0
            for seed in range(args.seeds):
                cfg = SimConfig(
                    mode=args.mode, pow_name=args.pow, t=t,
                    writers=1 if args.mode == "sw" else 2, readers=2,
                    writes=writes, reads=reads, value_size=size,
                    delay=args.delay, seed=seed)
                res = run(cfg)
                for rec in res.history:
                    if rec.res_tick is None:
                        continue
                    ops.append(rec)
                    (wl if rec.kind == "write" else rl).append(
                        rec.res_tick - rec.inv_tick)
                data += res.metrics["data_bytes"]
                msgs += res.metrics["msgs_sent"]
            s = 3 * t + 1
            per_write = data / (writes * cfg.writers * args.seeds)
            ideal = s * size / (t + 1)
            rows.append((t, s, size, round(per_write), round(ideal),
                         "%+.2f" % ((per_write - ideal) / ideal * 100),
                         "%d/%d" % (_percentile(wl, .5), _percentile(wl, .95)),
                         "%d/%d" % (_percentile(rl, .5), _percentile(rl, .95)),
                         "%.1f" % (msgs / len(ops))))
    widths = [max(len(str(header[i])),
                  max(len(str(row[i])) for row in rows))
              for i in range(len(header))]
    for line in (header, *rows):
        print("  ".join(str(cell).rjust(widths[i])
                        for i, cell in enumerate(line)))
    if args.out:
        _write_ndjson(args.out, [dict(zip(header, row)) for row in rows])
    return 0


def cmd_scenarios(args):
    for name in sorted(scenarios.CATALOG):
        sc = scenarios.CATALOG[name]
        print("%-22s %s  [%s]" % (name, sc.summary, sc.mode))
    print("%-22s every sw scenario with seed-derived workloads  [sw]"
          % "sw-catalog")
    print("%-22s every mw scenario with seed-derived workloads  [mw]"
          % "mw-catalog")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="powerstore",
        description="deterministic simulator for proof-of-writing storage")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="sweep a scenario over seeds")
    _add_run_flags(p_run, seeds=True)
    p_run.set_defaults(fn=cmd_run)

    p_rep = sub.add_parser("replay", help="re-run one seed and dump its log")
    _add_run_flags(p_rep, seeds=False)
    p_rep.set_defaults(fn=cmd_replay)

    p_bench = sub.add_parser("bench", help="wire cost and latency table")
    p_bench.add_argument("--mode", choices=("sw", "mw"), default="sw")
    p_bench.add_argument("--pow", choices=("hash", "shamir"), default="hash")
    p_bench.add_argument("--t-list", default="1,2,3")
    p_bench.add_argument("--sizes", default="65536,262144,1048576")
    p_bench.add_argument("--delay", default="uniform:1,10")
    p_bench.add_argument("--seeds", type=int, default=3)
    p_bench.add_argument("--out")
    p_bench.set_defaults(fn=cmd_bench)

    p_list = sub.add_parser("scenarios", help="list the scenario catalog")
    p_list.set_defaults(fn=cmd_scenarios)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
