"""Post-hoc analysis of episode logs: which substations get acted on, how many
distinct actions an agent uses, and which substation sequences recur inside
overflow events.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

from .scenario import read_episode_log

STRESS_RHO = 0.95
MAX_NGRAM = 5


def _action_key(action: dict) -> str:
    kind = action.get("kind")
    if kind == "set_substation":
        buses = ",".join(str(b) for b in action["assignment"])
        return f"set_substation:{action['substation']}:{buses}"
    if kind == "reconnect_line":
        return f"reconnect_line:{action['line']}"
    if kind == "disconnect_line":
        return f"disconnect_line:{action['line']}"
    return kind or "unknown"


def _is_stressed(record: dict, threshold: float) -> bool:
    if record.get("rho_max", 0.0) >= threshold:
        return True
    decision = record.get("decision")
    if decision and decision.get("rho_do_nothing") is not None:
        return decision["rho_do_nothing"] >= threshold
    if decision and decision.get("rho_do_nothing") is None:
        return True  # infeasible do-nothing is as stressed as it gets
    return False


def analyze_records(records: list[dict], threshold: float = STRESS_RHO,
                    max_n: int = MAX_NGRAM) -> dict:
    """Counts for one episode log (already parsed)."""
    sub_counts: Counter = Counter()
    action_keys: set[str] = set()
    ngrams: Counter = Counter()
    event_subs: list[int] = []
    in_event = False

    def flush_event():
        nonlocal event_subs
        for n in range(2, max_n + 1):
            for i in range(len(event_subs) - n + 1):
                ngrams[tuple(event_subs[i:i + n])] += 1
        event_subs = []

    for rec in records:
        if rec.get("record") != "step":
            continue
        applied = rec.get("applied", {"kind": "do_nothing"})
        kind = applied.get("kind")
        if kind == "set_substation":
            sub_counts[int(applied["substation"])] += 1
            action_keys.add(_action_key(applied))
        elif kind in ("reconnect_line", "disconnect_line"):
            action_keys.add(_action_key(applied))
        stressed = _is_stressed(rec, threshold)
        if stressed:
            in_event = True
            if kind == "set_substation":
                event_subs.append(int(applied["substation"]))
        elif in_event:
            flush_event()
            in_event = False
    if in_event:
        flush_event()

    return {
        "substation_counts": dict(sorted(sub_counts.items())),
        "distinct_substations": len(sub_counts),
        "distinct_actions": len(action_keys),
        "action_keys": sorted(action_keys),
        "ngrams": {"->".join(map(str, k)): v for k, v in ngrams.items()},
    }


def merge_reports(reports: list[dict]) -> dict:
    subs: Counter = Counter()
    keys: set[str] = set()
    grams: Counter = Counter()
    for rep in reports:
        subs.update({int(k): v for k, v in rep["substation_counts"].items()})
        keys.update(rep["action_keys"])
        grams.update(rep["ngrams"])
    top = sorted(grams.items(), key=lambda kv: (-kv[1], kv[0]))[:20]
    return {
        "substation_counts": {str(k): v for k, v in sorted(subs.items())},
        "distinct_substations": len(subs),
        "distinct_actions": len(keys),
        "action_keys": sorted(keys),
        "top_sequences": [{"sequence": k, "count": v} for k, v in top],
    }


def analyze_logs(paths: list[str | Path], threshold: float = STRESS_RHO,
                 per_agent: bool = True) -> dict:
    """Aggregate analysis over many episode logs, grouped by agent name."""
    by_agent: dict[str, list[dict]] = {}
    for path in paths:
        records = read_episode_log(path)
        agent = records[0].get("agent", "unknown")
        by_agent.setdefault(agent, []).append(analyze_records(records, threshold))
    report = {agent: merge_reports(reps) for agent, reps in sorted(by_agent.items())}
    return report if per_agent else merge_reports(
        [r for reps in by_agent.values() for r in reps])


def render_analysis(report: dict) -> str:
    lines = []
    for agent, rep in report.items():
        lines.append(f"agent {agent}: {rep['distinct_actions']} distinct actions "
                     f"across {rep['distinct_substations']} substations")
        for sub, count in rep["substation_counts"].items():
            lines.append(f"  substation {sub}: {count} actions")
        if rep["top_sequences"]:
            lines.append("  frequent substation sequences in overflow events:")
            for item in rep["top_sequences"][:8]:
                lines.append(f"    {item['sequence']}  x{item['count']}")
    return "\n".join(lines)
