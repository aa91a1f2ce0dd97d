"""KPI computation and the CSV/JSON report surface.

Collectors are per-episode; merging is plain arithmetic means over episode
rows, so batch aggregation is associative and order-independent.  Column
order in episodes.csv is frozen — downstream tooling indexes by position.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

EPISODE_COLUMNS = [
    "seed", "delta_dapp", "strategy", "intent_based", "direction",
    "pdr", "throughput_bps", "latency_ms", "jitter_ms", "prb_usage_pct",
    "decision_time_us", "candidate_set_mean", "iss_mean",
    "f0_mean", "f1_mean", "f2_mean",
]

MESSAGE_COLUMNS = ["seed", "delta_dapp", "tti", "service_model", "msg_type",
                   "direction", "payload_fields"]

MEAN_KPIS = ["pdr", "throughput_bps", "latency_ms", "jitter_ms",
             "prb_usage_pct", "decision_time_us", "candidate_set_mean",
             "iss_mean", "f0_mean", "f1_mean", "f2_mean"]


@dataclass
class KpiRecord:
    direction: str
    strategy: str
    intent_based: bool
    delta_dapp: int
    seed: int
    pdr: float
    throughput_bps: float
    latency_ms: float | None
    jitter_ms: float | None
    prb_usage_pct: float
    decision_time_us: float | None
    candidate_set_mean: float
    iss_mean: float
    f0_mean: float
    f1_mean: float
    f2_mean: float

    def row(self) -> list:
        return [self.seed, self.delta_dapp, self.strategy,
                int(self.intent_based), self.direction, self.pdr,
                self.throughput_bps, self.latency_ms, self.jitter_ms,
                self.prb_usage_pct, self.decision_time_us,
                self.candidate_set_mean, self.iss_mean,
                self.f0_mean, self.f1_mean, self.f2_mean]


def pdr(sent: int, delivered: int) -> float:
    """Delivered over sent; vacuously 1 for an idle flow."""
    if delivered > sent or delivered < 0:
        raise ValueError(f"delivered {delivered} inconsistent with sent {sent}")
    if sent == 0:
        return 1.0
    return delivered / sent


def latency_and_jitter(flow_latencies: list):
    """(mean latency, mean jitter) in ms over delivered packets.

    ``flow_latencies`` holds one latency list per flow, each ordered by
    delivery completion; jitter is the mean absolute difference between
    consecutive latencies within a flow.  Empty sets yield None.
    """
    all_lat = [l for flow in flow_latencies for l in flow]
    if not all_lat:
        return None, None
    diffs = [abs(flow[i] - flow[i - 1])
             for flow in flow_latencies for i in range(1, len(flow))]
    mean_lat = sum(all_lat) / len(all_lat)
    mean_jit = sum(diffs) / len(diffs) if diffs else None
    return mean_lat, mean_jit


def prb_usage(used_unit_ttis: int, capacity: int, ttis: int) -> float:
    """Percentage of the resource grid allocated (grants + HARQ reserves)."""
    if capacity <= 0 or ttis <= 0:
        return 0.0
    return 100.0 * used_unit_ttis / (capacity * ttis)


def mean_or_none(values: list):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_episodes_csv(records: list, path: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_COLUMNS)
        for rec in records:
            w.writerow([_fmt(v) for v in rec.row()])


def write_messages_csv(rows: list, path: str):
    """rows: (seed, delta, tti, service_model, msg_type, direction, fields)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MESSAGE_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_episodes_csv(path: str) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            parsed = dict(row)
            for k in MEAN_KPIS:
                parsed[k] = float(row[k]) if row[k] != "" else None
            parsed["seed"] = int(row["seed"])
            parsed["delta_dapp"] = int(row["delta_dapp"])
            parsed["intent_based"] = bool(int(row["intent_based"]))
            out.append(parsed)
    return out


def summarize(records: list) -> dict:
    """Means per (strategy, intent_based, delta, direction) plus the
    intent-based minus agnostic delta per KPI."""
    groups = {}
    for rec in records:
        key = (rec.strategy, rec.intent_based, rec.delta_dapp, rec.direction)
        groups.setdefault(key, []).append(rec)
    means = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        strategy, ib, delta, direction = key
        recs = groups[key]
        entry = {"strategy": strategy, "intent_based": ib,
                 "delta_dapp": delta, "direction": direction,
                 "episodes": len(recs)}
        for kpi in MEAN_KPIS:
            entry[kpi] = mean_or_none([getattr(r, kpi) for r in recs])
        means.append(entry)
    deltas = []
    by_key = {(m["strategy"], m["intent_based"], m["delta_dapp"], m["direction"]): m
              for m in means}
    for (strategy, ib, delta, direction), m in sorted(by_key.items()):
        if not ib:
            continue
        base = by_key.get((strategy, False, delta, direction))
        if base is None:
            continue
        d = {"strategy": strategy, "delta_dapp": delta, "direction": direction}
        for kpi in MEAN_KPIS:
            if m[kpi] is None or base[kpi] is None:
                d[kpi] = None
            else:
                d[kpi] = m[kpi] - base[kpi]
        deltas.append(d)
    return {"means": means, "ib_minus_agnostic": deltas}


def write_summary_json(records: list, path: str, extra: dict | None = None) -> dict:
    summary = summarize(records)
    if extra:
        summary.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def emit(records: list, message_rows: list, out_dir: str,
         extra: dict | None = None) -> dict:
    """Write episodes.csv, summary.json, and messages.csv under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    try:
        write_episodes_csv(records, os.path.join(out_dir, "episodes.csv"))
        write_messages_csv(message_rows, os.path.join(out_dir, "messages.csv"))
        return write_summary_json(records, os.path.join(out_dir, "summary.json"),
                                  extra)
    except OSError as exc:
        raise OSError(f"cannot write reports under {out_dir}: {exc}") from exc
