"""Observation builders for the actors, the critics, and the baselines.

Actor observations are ego-centric: positions are translated to the observing
robot and rotated by minus its heading, so a rigid motion of the whole world
leaves them unchanged. Empty slots are all-zero with a zero validity flag.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .world import WorldState

LAYOUT_VERSION = "v1"

OWN_FIELDS = [("last_command", 2), ("ego_velocity", 2), ("angular_velocity", 1)]
ROBOT_SLOT_FIELDS = [
    ("rel_position", 2), ("rel_heading_cos_sin", 2), ("rel_velocity", 2),
    ("angular_velocity", 1), ("valid", 1),
]
OBJECT_SLOT_FIELDS = [("rel_position", 2), ("rel_goal", 2), ("velocity", 2), ("valid", 1)]
TARGET_FIELDS = [("rel_position", 2), ("rel_goal", 2), ("velocity", 2)]
NEAREST_OBJECT_FIELDS = [("rel_position", 2), ("velocity", 2), ("valid", 1)]
GLOBAL_ROBOT_FIELDS = [("position", 2), ("heading_cos_sin", 2), ("velocity", 2), ("angular_velocity", 1)]
GLOBAL_OBJECT_FIELDS = [
    ("position", 2), ("goal", 2), ("velocity", 2), ("weight_one_hot", 3), ("completed", 1),
]
BASELINE_OBJECT_FIELDS = [("position", 2), ("goal", 2), ("velocity", 2), ("completed", 1)]

OWN_DIM = 5
ROBOT_SLOT_DIM = 8
OBJECT_SLOT_DIM = 7
LOW_OBS_DIM = 24
GLOBAL_ROBOT_DIM = 7
GLOBAL_OBJECT_DIM = 10
BASELINE_OBJECT_DIM = 7


class LayoutMismatch(ValueError):
    """An observation does not match the layout a network was built for."""


@dataclass(frozen=True)
class ObsConfig:
    J: int = 2
    K: int = 2

    def __post_init__(self):
        if self.J < 1 or self.K < 1:
            raise ValueError("J and K must be >= 1")

    @classmethod
    def from_tag(cls, tag: str) -> "ObsConfig":
        """Inverse of ``tag``."""
        slots = tag.rsplit("/", 1)[-1]
        if not slots.startswith("J") or "K" not in slots:
            raise LayoutMismatch(f"not an observation layout tag: {tag!r}")
        j, k = slots[1:].split("K")
        return cls(J=int(j), K=int(k))

    @property
    def tag(self) -> str:
        return f"tihdp-obs/{LAYOUT_VERSION}/J{self.J}K{self.K}"

    @property
    def high_dim(self) -> int:
        return OWN_DIM + ROBOT_SLOT_DIM * self.J + OBJECT_SLOT_DIM * self.K


def global_dim(n_robots: int, n_objects: int) -> int:
    return GLOBAL_ROBOT_DIM * n_robots + GLOBAL_OBJECT_DIM * n_objects


def baseline_global_dim(n_robots: int, n_objects: int) -> int:
    return GLOBAL_ROBOT_DIM * n_robots + BASELINE_OBJECT_DIM * n_objects


def _sorted_by_distance(origin, points, candidates):
    d = [math.hypot(*(points[c] - origin)) for c in candidates]
    return [c for _, c in sorted(zip(d, candidates))]


def nearest_entities(state: WorldState, i: int, J: int, K: int):
    """Ids of the J nearest other robots and K nearest uncompleted objects.

    Missing slots are padded with -1. Ties go to the lower id.
    """
    origin = state.robot_pos[i]
    others = [j for j in range(state.n_robots) if j != i]
    open_objs = [l for l in range(state.n_objects) if not state.completed[l]]
    robots = _sorted_by_distance(origin, state.robot_pos, others)[:J]
    objects = _sorted_by_distance(origin, state.obj_pos, open_objs)[:K]
    return robots + [-1] * (J - len(robots)), objects + [-1] * (K - len(objects))


class _Ego:
    __slots__ = ("origin", "c", "s", "heading")

    def __init__(self, state: WorldState, i: int):
        self.origin = state.robot_pos[i]
        self.heading = float(state.robot_heading[i])
        self.c = math.cos(self.heading)
        self.s = math.sin(self.heading)

    def rot(self, v) -> tuple:
        return (self.c * v[0] + self.s * v[1], -self.s * v[0] + self.c * v[1])

    def point(self, p) -> tuple:
        return self.rot(p - self.origin)


def _own_block(state: WorldState, i: int, ego: _Ego) -> list:
    cmd = state.robot_cmd[i]
    return [float(cmd[0]), float(cmd[1]), *ego.rot(state.robot_vel[i]), float(state.robot_omega[i])]


def _robot_slot(state: WorldState, i: int, j: int, ego: _Ego) -> list:
    if j < 0:
        return [0.0] * ROBOT_SLOT_DIM
    dh = float(state.robot_heading[j]) - ego.heading
    return [
        *ego.point(state.robot_pos[j]),
        math.cos(dh), math.sin(dh),
        *ego.rot(state.robot_vel[j] - state.robot_vel[i]),
        float(state.robot_omega[j]),
        1.0,
    ]


def _object_slot(state: WorldState, l: int, ego: _Ego) -> list:
    if l < 0:
        return [0.0] * OBJECT_SLOT_DIM
    return [
        *ego.point(state.obj_pos[l]),
        *ego.point(state.obj_goal[l]),
        *ego.rot(state.obj_vel[l]),
        1.0,
    ]


def build_high_obs(state: WorldState, i: int, config: ObsConfig, neighbors=None) -> np.ndarray:
    """Allocation-actor observation of robot ``i``; length ``5 + 8J + 7K``."""
    ego = _Ego(state, i)
    robots, objects = neighbors or nearest_entities(state, i, config.J, config.K)
    out = _own_block(state, i, ego)
    for j in robots:
        out += _robot_slot(state, i, j, ego)
    for l in objects:
        out += _object_slot(state, l, ego)
    return np.asarray(out)


def build_low_obs(state: WorldState, i: int, target: Optional[int]) -> np.ndarray:
    """Control-actor observation of robot ``i`` steering to ``target``; length 24."""
    ego = _Ego(state, i)
    robots, _ = nearest_entities(state, i, 1, 0)
    out = _own_block(state, i, ego) + _robot_slot(state, i, robots[0], ego)
    if target is None:
        out += [0.0] * 6
    else:
        out += [
            *ego.point(state.obj_pos[target]),
            *ego.point(state.obj_goal[target]),
            *ego.rot(state.obj_vel[target]),
        ]
    # nearest uncompleted object other than the target
    candidates = [l for l in range(state.n_objects) if l != target and not state.completed[l]]
    ranked = _sorted_by_distance(state.robot_pos[i], state.obj_pos, candidates)
    if ranked:
        l = ranked[0]
        out += [*ego.point(state.obj_pos[l]), *ego.rot(state.obj_vel[l]), 1.0]
    else:
        out += [0.0] * 5
    return np.asarray(out)


def _check_dims(state: WorldState, expected) -> None:
    if expected is None:
        return
    n, m = expected
    if (state.n_robots, state.n_objects) != (n, m):
        raise LayoutMismatch(
            f"state has N={state.n_robots}, M={state.n_objects}; layout expects N={n}, M={m}"
        )


def _global_robots(state: WorldState, order) -> list:
    out = []
    for j in order:
        h = float(state.robot_heading[j])
        out += [*state.robot_pos[j], math.cos(h), math.sin(h), *state.robot_vel[j], float(state.robot_omega[j])]
    return out


def build_global_state(state: WorldState, expected=None) -> np.ndarray:
    """Critic input in the world frame, ordered by id; includes weight classes."""
    _check_dims(state, expected)
    out = _global_robots(state, range(state.n_robots))
    for l in range(state.n_objects):
        one_hot = [0.0, 0.0, 0.0]
        one_hot[int(state.obj_class[l])] = 1.0
        out += [*state.obj_pos[l], *state.obj_goal[l], *state.obj_vel[l], *one_hot, float(state.completed[l])]
    return np.asarray(out, dtype=float)


def build_baseline_obs(state: WorldState, i: int, variant: str, config: ObsConfig = None, expected=None) -> np.ndarray:
    """Observation of the two-layered baselines.

    ``global`` sees every entity (observer first, no weight information) and is
    tied to the N, M it was built for; ``local`` shares the allocation-actor
    layout.
    """
    if variant == "local":
        return build_high_obs(state, i, config or ObsConfig())
    if variant != "global":
        raise ValueError(f"unknown baseline variant {variant!r}")
    _check_dims(state, expected)
    order = [i] + [j for j in range(state.n_robots) if j != i]
    out = _global_robots(state, order)
    for l in range(state.n_objects):
        out += [*state.obj_pos[l], *state.obj_goal[l], *state.obj_vel[l], float(state.completed[l])]
    return np.asarray(out, dtype=float)


def _segments(prefix: str, fields, offset: int):
    rows = []
    for name, width in fields:
        rows.append({"field": f"{prefix}.{name}", "offset": offset, "length": width})
        offset += width
    return rows, offset


def describe_layout(config: ObsConfig, n_robots: int, n_objects: int) -> dict:
    """Field offsets of every observation vector, for logs and checkpoints."""

    def build(blocks):
        rows, off = [], 0
        for prefix, fields in blocks:
            seg, off = _segments(prefix, fields, off)
            rows += seg
        return {"dim": off, "fields": rows}

    high = [("own", OWN_FIELDS)]
    high += [(f"robot[{j}]", ROBOT_SLOT_FIELDS) for j in range(config.J)]
    high += [(f"object[{k}]", OBJECT_SLOT_FIELDS) for k in range(config.K)]
    low = [
        ("own", OWN_FIELDS), ("nearest_robot", ROBOT_SLOT_FIELDS),
        ("target", TARGET_FIELDS), ("nearest_object", NEAREST_OBJECT_FIELDS),
    ]
    glob = [(f"robot[{j}]", GLOBAL_ROBOT_FIELDS) for j in range(n_robots)]
    glob += [(f"object[{l}]", GLOBAL_OBJECT_FIELDS) for l in range(n_objects)]
    base = [("observer", GLOBAL_ROBOT_FIELDS)]
    base += [(f"other_robot[{j}]", GLOBAL_ROBOT_FIELDS) for j in range(n_robots - 1)]
    base += [(f"object[{l}]", BASELINE_OBJECT_FIELDS) for l in range(n_objects)]
    return {
        "tag": config.tag,
        "n_robots": n_robots,
        "n_objects": n_objects,
        "high_obs": build(high),
        "low_obs": build(low),
        "global_state": build(glob),
        "baseline_global_obs": build(base),
    }
