"""Line-delimited JSON trajectory logs.

The first line is a header naming the schema, observation layout, scenario and
seed, plus the initial world. Every following line is one control step.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import warnings
from pathlib import Path

import numpy as np

from ..world import WorldState

SCHEMA = "tihdp-trajectory/1"

log = logging.getLogger(__name__)


class TruncatedLog(UserWarning):
    pass


def _floats(a) -> list:
    return [float(v) for v in np.ravel(a)]


def header_record(state: WorldState, seed: int, variant: str, layout_tag: str) -> dict:
    scenario = dataclasses.asdict(state.config)
    scenario["masses"] = list(scenario["masses"])
    return {
        "type": "header",
        "schema": SCHEMA,
        "layout_tag": layout_tag,
        "variant": variant,
        "seed": int(seed),
        "scenario": scenario,
        "initial": {
            "robot_position": [_floats(p) for p in state.robot_pos],
            "robot_heading": _floats(state.robot_heading),
            "object_position": [_floats(p) for p in state.obj_pos],
            "object_goal": [_floats(p) for p in state.obj_goal],
            "object_class": [int(c) for c in state.obj_class],
        },
    }


def step_record(state: WorldState, targets, priorities, alphas, betas, team: float, lo) -> dict:
    robots = []
    for i in range(state.n_robots):
        robots.append({
            "id": i,
            "position": _floats(state.robot_pos[i]),
            "heading": float(state.robot_heading[i]),
            "velocity": _floats(state.robot_vel[i]),
            "command": [int(c) for c in state.robot_cmd[i]],
            "target": None if targets[i] is None else int(targets[i]),
            "priority": _floats(priorities[i]),
            "alpha": int(alphas[i]),
            "beta": int(betas[i]),
        })
    objects = [
        {
            "id": l,
            "position": _floats(state.obj_pos[l]),
            "velocity": _floats(state.obj_vel[l]),
            "completed": bool(state.completed[l]),
        }
        for l in range(state.n_objects)
    ]
    return {
        "type": "step",
        "step": int(state.step_index),
        "robots": robots,
        "objects": objects,
        "rewards": {"team": float(team), "lo": _floats(lo)},
    }


class TrajectoryWriter:
    """Append-only writer; each record is flushed as one line."""

    def __init__(self, path, header: dict):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")
        self.write(header)

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path):
    """Return ``(header, steps, truncated)``.

    Reading stops at the first unparseable or incomplete line; the records
    before it are returned and ``truncated`` is set.
    """
    header, steps, truncated = None, [], False
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.endswith("\n"):
                truncated = True
                break
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                truncated = True
                break
            if lineno == 1:
                if rec.get("type") != "header":
                    raise ValueError(f"{path}: first record is not a header")
                if rec.get("schema") != SCHEMA:
                    raise ValueError(f"{path}: unsupported schema {rec.get('schema')!r}")
                header = rec
            else:
                steps.append(rec)
    if header is None:
        raise ValueError(f"{path}: missing header")
    if truncated:
        msg = f"{path}: log is truncated after {len(steps)} complete steps"
        warnings.warn(msg, TruncatedLog, stacklevel=2)
        log.warning(msg)
    return header, steps, truncated
