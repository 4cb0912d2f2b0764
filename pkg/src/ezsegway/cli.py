"""Command line entry point: run, scenario, verify, stats."""
from __future__ import annotations

import argparse
import os
import sys

from .controller import PlanningError, RunOptions
from .metrics import (MODES, format_summary, metrics_row, read_metrics, rows_to_csv,
                      run_pairs, run_transitions, summarize)
from .scenarios import NAMES, run_scenario
from .sim import TraceParseError, trace_from_csv, trace_to_csv
from .verifier import SAFETY, check_properties, violations_to_csv
from .workload import TopologyError, config_sequence, load_topology, reroute_pairs

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
PRESET_COMPUTE_MS = 3.4


def _delay(text):
    if text == "preset":
        return PRESET_COMPUTE_MS
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("delay must be non-negative")
    return v


def _fraction(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("fraction must be in (0, 1]")
    return v


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def cmd_run(a) -> int:
    try:
        topo = load_topology(a.topology)
    except (OSError, TopologyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    if a.controller is not None and a.controller not in topo.switches:
        print(f"error: controller {a.controller} is not a switch", file=sys.stderr)
        return EXIT_USAGE
    modes = MODES if a.mode == "both" else (a.mode,)
    opts = RunOptions(split=not a.no_split, timeout_ms=a.timeout_ms,
                      compute_delay_ms=a.compute_delay_ms, controller=a.controller)
    seg = not a.no_segmentation
    if a.reroute is not None:
        pairs = reroute_pairs(topo, a.configs, a.seed, a.reroute, n_pairs=a.pairs)
        transitions = run_pairs(topo, pairs, modes, opts, segmentation=seg)
    else:
        configs = config_sequence(topo, a.configs, a.seed, n_pairs=a.pairs)
        transitions = run_transitions(topo, configs, modes, opts, segmentation=seg)
    rows = {m: [] for m in modes}
    flows = {m: [] for m in modes}
    violations = 0
    try:
        for tr in transitions:
            for m in modes:
                rep = tr.reports[m]
                rows[m].append(metrics_row(tr.idx, rep))
                if a.per_flow:
                    for fid, t in sorted(rep.flow_done.items()):
                        flows[m].append(f"{tr.idx},{fid},{t:.6f}")
                if a.traces:
                    _write(os.path.join(a.out, "traces", f"{m}_{tr.idx:04d}.csv"), trace_to_csv(rep.trace))
                if a.verify:
                    bad = [v for v in check_properties(rep.trace, check_termination=rep.completed)
                           if v.kind in SAFETY]
                    if bad:
                        violations += len(bad)
                        print(f"update {tr.idx} {m}: {len(bad)} violation(s), first: {bad[0]}", file=sys.stderr)
    except PlanningError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VIOLATION
    try:
        all_rows = []
        for m in modes:
            _write(os.path.join(a.out, f"metrics_{m}.csv"), rows_to_csv(rows[m]))
            if a.per_flow:
                _write(os.path.join(a.out, f"flows_{m}.csv"),
                       "update_idx,flow_id,completion_ms\n" + "".join(x + "\n" for x in flows[m]))
            all_rows += read_metrics(rows_to_csv(rows[m]))
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(format_summary(summarize(all_rows)))
    if a.verify:
        print(f"verify: {violations} violation(s)")
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_scenario(a) -> int:
    res = run_scenario(a.name, segmentation=not a.no_segmentation, split=not a.no_split, verbose=a.verbose)
    print(f"{res.name}: {'PASS' if res.passed else 'FAIL'}")
    for line in res.lines:
        print(line)
    return EXIT_OK if res.passed else EXIT_VIOLATION


def cmd_verify(a) -> int:
    try:
        with open(a.trace) as fh:
            recs = trace_from_csv(fh.read())
    except (OSError, TraceParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        vs = check_properties(recs, check_termination=not a.safety_only)
    except ValueError as e:
        print(f"error: malformed trace: {e}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(violations_to_csv(vs))
    return EXIT_VIOLATION if vs else EXIT_OK


def cmd_stats(a) -> int:
    rows = []
    try:
        for p in a.metrics:
            with open(p) as fh:
                rows += read_metrics(fh.read())
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    if not rows:
        print("error: no metric rows", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(format_summary(summarize(rows)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ezsegway", description="Decentralized consistent network updates.")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate a sequence of configuration updates")
    r.add_argument("--topology", required=True,
                   help="topology JSON path, bundled name (b4, internet2) or rocketfuel:N[:SEED]")
    r.add_argument("--mode", choices=("ezsegway", "centralized", "both"), default="both")
    r.add_argument("--configs", type=int, default=100, help="number of configurations")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--pairs", "--flows", dest="pairs", type=int, default=None,
                   help="source-destination pairs per configuration (default: 8 per switch)")
    r.add_argument("--reroute", type=_fraction, default=None, metavar="P",
                   help="instead of a sequence, update fresh configs after link failures that reroute a fraction P of flows")
    r.add_argument("--out", default="results", help="output directory")
    r.add_argument("--traces", action="store_true", help="write one trace CSV per update and mode")
    r.add_argument("--no-split", action="store_true")
    r.add_argument("--no-segmentation", action="store_true")
    r.add_argument("--timeout-ms", type=float, default=150.0)
    r.add_argument("--compute-delay-ms", type=_delay, default=0.0,
                   help=f"per-message switch processing delay, or 'preset' ({PRESET_COMPUTE_MS} ms)")
    r.add_argument("--controller", type=int, default=None, help="controller switch (default: centroid)")
    r.add_argument("--per-flow", action="store_true", help="also write per-flow completion times")
    r.add_argument("--verify", action="store_true", help="check every trace for violations")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("scenario", help="run a reference instance")
    s.add_argument("name", choices=NAMES)
    s.add_argument("--no-split", action="store_true")
    s.add_argument("--no-segmentation", action="store_true")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(fn=cmd_scenario)

    v = sub.add_parser("verify", help="check a trace CSV")
    v.add_argument("trace")
    v.add_argument("--safety-only", action="store_true", help="skip the final-state check")
    v.set_defaults(fn=cmd_verify)

    st = sub.add_parser("stats", help="summarise metrics CSV files")
    st.add_argument("metrics", nargs="+")
    st.set_defaults(fn=cmd_stats)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    if getattr(a, "configs", 1) is not None and getattr(a, "configs", 1) < 1:
        print("error: --configs must be positive", file=sys.stderr)
        return EXIT_USAGE
    return a.fn(a)


if __name__ == "__main__":
    sys.exit(main())
