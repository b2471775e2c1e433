"""CSV and sidecar writers. Output is byte-stable for identical inputs."""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

REGRET_HEADER = ("run_id", "agent_id", "K", "m", "T", "algorithm", "regret_i", "min_agent_reward_sum")
REPORT_HEADER = ("claim_id", "config_digest", "margin", "pass")
TRACE_HEADER = ("t", "phase", "sender", "recipients", "kind", "payload")
STEP_HEADER = ("t", "agent", "action", "reward", "in_C", "in_W")


def number_text(x) -> str:
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([number_text(x) for x in row])
    return buf.getvalue()


def write_text(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        print(text, end="")
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def regret_rows(records) -> list:
    return [(r.run_id, r.agent_id, r.K, r.m, r.T, r.algorithm, r.regret_i, r.min_agent_reward_sum) for r in records]


def report_rows(reports) -> list:
    return [tuple(r.row()[k] for k in REPORT_HEADER) for r in reports]


def trace_rows(history) -> list:
    rows = []
    for step in history.steps:
        for msg in step.messages:
            rows.append((step.t, msg.phase, msg.sender, " ".join(map(str, sorted(msg.recipients))), msg.kind,
                         msg.payload()))
    return rows


def step_rows(history, records) -> list:
    """Per step and agent: action, reward and whether the agent was in C_t and W_t by its own view."""
    rows = []
    for step in history.steps:
        for i in range(history.m):
            rec = records[i][step.t - 1] if records else None
            in_c = int(rec is not None and i in rec.active)
            in_w = int(rec is not None and i in rec.verified)
            rows.append((step.t, i, step.actions[i], step.rewards[i], in_c, in_w))
    return rows


def write_sidecar(path: Optional[str], meta: dict) -> None:
    if path is None or path == "-":
        return
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


def read_regret_csv(path) -> list:
    from .montecarlo import RegretRecord

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REGRET_HEADER:
            raise ValueError(f"{path}: expected header {','.join(REGRET_HEADER)}")
        return [
            RegretRecord(int(r["run_id"]), int(r["agent_id"]), int(r["K"]), int(r["m"]), int(r["T"]), r["algorithm"],
                         float(r["regret_i"]), float(r["min_agent_reward_sum"]))
            for r in reader
        ]
