"""Hand-written allocation and pushing controller.

It uses privileged weight classes and exists to show that the world is
solvable, not as a learned baseline. Every decision is a pure function of the
current state: no memory between steps.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..world import WeightClass, WorldState, wrap_angle

HEADING_TOLERANCE = 0.12
DRIVE_CONE = math.pi / 3
STANDOFF = 0.04
PAIR_OFFSET = 0.16


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def allocate(state: WorldState) -> list:
    """Assign every robot an object id or ``None``.

    Light objects take one robot, Medium objects the two nearest free robots;
    a Medium object is only served when a pair is available. Pairs are picked
    greedily by increasing robot-object distance.
    """
    n = state.n_robots
    open_ids = [
        l for l in range(state.n_objects)
        if not state.completed[l] and state.obj_class[l] != WeightClass.HEAVY
    ]
    need = {l: 2 if state.obj_class[l] == WeightClass.MEDIUM else 1 for l in open_ids}
    pairs = sorted(
        (_dist(state.robot_pos[i], state.obj_pos[l]), l, i) for i in range(n) for l in open_ids
    )
    assignment: list = [None] * n
    free = set(range(n))
    # Medium objects first when a pair can be formed, then Light ones
    for cls in (WeightClass.MEDIUM, WeightClass.LIGHT):
        for _, l, i in pairs:
            if state.obj_class[l] != cls or need[l] == 0 or i not in free:
                continue
            if cls == WeightClass.MEDIUM and len(free) < 2 and need[l] == 2:
                continue
            assignment[i] = l
            free.discard(i)
            need[l] -= 1
    # leftover robots help the nearest open object
    for i in sorted(free):
        cands = [(_dist(state.robot_pos[i], state.obj_pos[l]), l) for l in open_ids]
        if cands:
            assignment[i] = min(cands)[1]
    return assignment


def _steer(state: WorldState, i: int, point, cone: float = DRIVE_CONE) -> tuple:
    x = state.robot_pos[i]
    desired = math.atan2(point[1] - x[1], point[0] - x[0])
    err = wrap_angle(desired - float(state.robot_heading[i]))
    turn = 0 if abs(err) < HEADING_TOLERANCE else (1 if err > 0 else -1)
    # near the point the turning circle would overshoot: rotate in place first
    if math.hypot(point[0] - x[0], point[1] - x[1]) < 0.4:
        cone = min(cone, 0.3)
    move = 1 if abs(err) < cone else 0
    return move, turn


def push_command(state: WorldState, i: int, target: int, lateral: float = 0.0) -> tuple:
    """Drive behind ``target`` relative to its goal, then push it goalward."""
    cfg = state.config
    z, goal, x = state.obj_pos[target], state.obj_goal[target], state.robot_pos[i]
    to_goal = goal - z
    u = to_goal / max(np.linalg.norm(to_goal), 1e-9)
    n = np.array([-u[1], u[0]])
    contact = cfg.body_radius + cfg.disc_radius
    rel = x - z
    along, across = float(rel @ u), float(rel @ n)
    behind = math.sqrt(max(contact ** 2 - lateral ** 2, 0.0))
    side = 1.0 if across >= 0.0 else -1.0
    clearance = contact + 0.15

    if along < -0.5 * behind:
        if along < -behind + 0.02 and abs(across - lateral) < 0.05:
            if lateral:
                # paired push: drive at the center; the partner holds the formation
                return _steer(state, i, z, cone=0.3)
            aim = z + 0.6 * u - 1.0 * across * n
            return _steer(state, i, aim, cone=0.3)
        return _steer(state, i, z - (behind + 0.15) * u + lateral * n)
    if along > 0.0 and abs(across) < clearance:
        # in front of the object: step aside before going around
        return _steer(state, i, z + side * clearance * n)
    return _steer(state, i, z + side * clearance * n - (behind + 0.25) * u)


def scripted_policy(state: WorldState, i: int) -> tuple:
    """Return ``(target id or None, (move, turn))`` for robot ``i``."""
    assignment = allocate(state)
    target = assignment[i]
    if target is None:
        return None, (0, 0)
    lateral = 0.0
    if state.obj_class[target] == WeightClass.MEDIUM:
        mates = [j for j in range(state.n_robots) if assignment[j] == target]
        if len(mates) >= 2:
            z, goal = state.obj_pos[target], state.obj_goal[target]
            u = (goal - z) / max(np.linalg.norm(goal - z), 1e-9)
            n = np.array([-u[1], u[0]])
            ranked = sorted(mates, key=lambda j: (float((state.robot_pos[j] - z) @ n), j))
            slot = ranked.index(i)
            lateral = PAIR_OFFSET if slot == len(ranked) - 1 else (-PAIR_OFFSET if slot == 0 else 0.0)
    return target, push_command(state, i, target, lateral)


def scripted_commands(state: WorldState) -> tuple:
    """Targets and commands for every robot."""
    out = [scripted_policy(state, i) for i in range(state.n_robots)]
    return [t for t, _ in out], [c for _, c in out]
