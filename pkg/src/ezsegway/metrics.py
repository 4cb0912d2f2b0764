"""Per-update metrics rows, percentile summaries and the transition runner."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .controller import RunOptions, plan_update, run_mode
from .netmodel import NetworkConfig

METRICS_HEADER = ["update_idx", "mode", "completion_ms", "messages", "gtm_msgs", "rm_msgs",
                  "splittable_deadlocks", "unsplittable_deadlocks", "extra_rules_mean",
                  "extra_rules_max", "extra_msgs"]
MODES = ("ezsegway", "centralized")


def percentile(values, p) -> float:
    """Nearest-rank percentile; nan for an empty input."""
    xs = sorted(v for v in values if not math.isnan(v))
    if not xs:
        return math.nan
    k = max(1, math.ceil(p / 100.0 * len(xs)))
    return xs[k - 1]


def _num(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.6f}"
    return str(x)


def metrics_row(idx, rep) -> list:
    """extra_rules_mean holds this update's count of additional entries (its
    mean over rows is the per-update mean); extra_rules_max is the largest
    count at any single switch."""
    return [idx, rep.mode, rep.completion_ms, rep.messages, rep.gtm_msgs, rep.rm_msgs,
            rep.splittable_deadlocks, rep.unsplittable_deadlocks, rep.extra_rules,
            rep.extra_rules_switch_max, rep.extra_msgs]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow([_num(x) for x in r])
    return buf.getvalue()


def read_metrics(text) -> list[dict]:
    rd = csv.DictReader(io.StringIO(text))
    if rd.fieldnames != METRICS_HEADER:
        raise ValueError("not a metrics file (header mismatch)")
    out = []
    for r in rd:
        d = dict(r)
        d["update_idx"] = int(d["update_idx"])
        for k in METRICS_HEADER[2:]:
            d[k] = float(d[k])
        out.append(d)
    return out


@dataclass
class Transition:
    idx: int
    plan: object
    reports: dict


def run_transitions(topology, configs, modes=MODES, opts: RunOptions | None = None,
                    segmentation=True, start: NetworkConfig | None = None):
    """Update through configs in order, starting from `start` (empty by
    default). Yields one Transition per update."""
    prev = start if start is not None else NetworkConfig()
    for i, cfg in enumerate(configs):
        plan = plan_update(topology, prev, cfg, segmentation=segmentation)
        reps = {m: run_mode(plan, m, opts) for m in modes}
        yield Transition(i, plan, reps)
        prev = cfg


def run_pairs(topology, pairs, modes=MODES, opts: RunOptions | None = None, segmentation=True):
    """Like run_transitions, but each update goes between its own
    (current, target) pair."""
    for i, (cur, tgt) in enumerate(pairs):
        plan = plan_update(topology, cur, tgt, segmentation=segmentation)
        yield Transition(i, plan, {m: run_mode(plan, m, opts) for m in modes})


def summarize(rows: list[dict]) -> dict:
    """Completion percentiles per mode, speedups, message ratio and the
    overhead table (from ezsegway rows)."""
    out = {}
    by = {}
    for r in rows:
        by.setdefault(r["mode"], []).append(r)
    for m, rs in sorted(by.items()):
        ct = [r["completion_ms"] for r in rs]
        out[m] = {
            "updates": len(rs),
            "completed": sum(1 for c in ct if not math.isnan(c)),
            "p50": percentile(ct, 50), "p90": percentile(ct, 90), "p99": percentile(ct, 99),
            "mean": _mean(ct),
            "messages": sum(r["messages"] for r in rs),
        }
    if "ezsegway" in out and "centralized" in out:
        e, c = out["ezsegway"], out["centralized"]
        out["speedup"] = {p: c[p] / e[p] if e[p] else math.nan for p in ("p50", "p90", "p99", "mean")}
        out["message_ratio"] = e["messages"] / c["messages"] if c["messages"] else math.nan
    ez = by.get("ezsegway", [])
    if ez:
        rules = [r["extra_rules_mean"] for r in ez]
        msgs = [r["extra_msgs"] for r in ez]
        out["overhead"] = {
            "splittable_deadlocks": sum(r["splittable_deadlocks"] for r in ez),
            "unsplittable_deadlocks": sum(r["unsplittable_deadlocks"] for r in ez),
            "extra_rules_mean": _mean(rules), "extra_rules_max": max(rules),
            "extra_msgs_mean": _mean(msgs), "extra_msgs_max": max(msgs),
        }
    return out


def _mean(xs):
    xs = [x for x in xs if not math.isnan(x)]
    return sum(xs) / len(xs) if xs else math.nan


def format_summary(s: dict) -> str:
    lines = []
    for m in MODES:
        if m in s:
            d = s[m]
            lines.append(f"{m:12s} updates={d['updates']} completed={d['completed']} "
                         f"p50={d['p50']:.3f} p90={d['p90']:.3f} p99={d['p99']:.3f} "
                         f"mean={d['mean']:.3f} messages={d['messages']:.0f}")
    if "speedup" in s:
        sp = s["speedup"]
        lines.append(f"speedup      p50={sp['p50']:.3f} p90={sp['p90']:.3f} p99={sp['p99']:.3f} mean={sp['mean']:.3f}")
        lines.append(f"msg_ratio    {s['message_ratio']:.3f}")
    if "overhead" in s:
        o = s["overhead"]
        lines.append(f"deadlocks    splittable={o['splittable_deadlocks']:.0f} unsplittable={o['unsplittable_deadlocks']:.0f}")
        lines.append(f"extra rules  mean={o['extra_rules_mean']:.3f} max={o['extra_rules_max']:.0f}")
        lines.append(f"extra msgs   mean={o['extra_msgs_mean']:.3f} max={o['extra_msgs_max']:.0f}")
    return "\n".join(lines) + "\n"
