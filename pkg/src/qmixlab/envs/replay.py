"""Line-delimited episode traces: one JSON record per step.

Each record carries the global state, per-agent observations, the joint
action, the shared reward and the termination flags, so an episode can be
replayed or audited without the environment.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, List


def step_record(episode: int, t: int, state, obs, actions, reward: float,
                terminated: bool, truncated: bool) -> dict:
    return {
        "episode": int(episode),
        "t": int(t),
        "state": [float(v) for v in state],
        "obs": [[float(v) for v in row] for row in obs],
        "actions": [int(a) for a in actions],
        "reward": float(reward),
        "terminated": bool(terminated),
        "truncated": bool(truncated),
    }


def write_trace(path, records: Iterable[dict]) -> None:
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_trace(path) -> Iterator[dict]:
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def episodes_in_trace(path) -> List[List[dict]]:
    """Group trace records by episode index, preserving step order."""
    grouped: dict = {}
    for rec in read_trace(path):
        grouped.setdefault(rec["episode"], []).append(rec)
    return [sorted(v, key=lambda r: r["t"]) for _, v in sorted(grouped.items())]
