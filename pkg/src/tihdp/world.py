"""Deterministic 2D world of differential-drive robots pushing disc objects.

Robots are kinematic discs driven by discrete (move, turn) commands. Objects are
discs that interact with robots through a capped penalty contact and slide on
the floor under Coulomb friction. All rewards and the goal predicate live here
as well, since they are pure functions of the world state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np


class WeightClass(IntEnum):
    LIGHT = 0
    MEDIUM = 1
    HEAVY = 2


class InfeasibleLayout(RuntimeError):
    """Raised when no overlap-free initial placement could be sampled."""


@dataclass(frozen=True)
class ScenarioConfig:
    n_robots: int = 3
    n_light: int = 2
    n_medium: int = 1
    n_heavy: int = 1
    goal_radius: float = 0.1
    episode_length: int = 400
    robot_ring: float = 1.0
    object_ring: float = 2.0
    goal_ring: float = 3.0
    robot_jitter: float = 0.5
    object_jitter: float = 0.3
    max_speed: float = 0.26
    max_turn_rate: float = 1.82
    max_push_force: float = 5.0
    static_friction: float = 0.3
    kinetic_friction: float = 0.3
    gravity: float = 9.81
    contact_stiffness: float = 500.0
    ctrl_dt: float = 0.1
    physics_substeps: int = 10
    close_distance: float = 0.3
    body_radius: float = 0.15
    disc_radius: float = 0.15
    masses: tuple = (1.0, 2.5, 100.0)

    def __post_init__(self):
        errors = []
        if self.n_robots < 1:
            errors.append("n_robots must be >= 1")
        if min(self.n_light, self.n_medium, self.n_heavy) < 0:
            errors.append("weight-class counts must be non-negative")
        if self.n_objects < 1:
            errors.append("at least one object is required")
        if self.goal_radius <= 0:
            errors.append("goal_radius must be positive")
        if self.episode_length < 1:
            errors.append("episode_length must be >= 1")
        if self.physics_substeps < 1:
            errors.append("physics_substeps must be >= 1")
        if len(self.masses) != 3:
            errors.append("masses needs one entry per weight class")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def n_objects(self) -> int:
        return self.n_light + self.n_medium + self.n_heavy

    @property
    def physics_dt(self) -> float:
        return self.ctrl_dt / self.physics_substeps

    @property
    def class_counts(self) -> tuple:
        return (self.n_light, self.n_medium, self.n_heavy)

    def describe(self) -> str:
        return f"{self.n_light}L/{self.n_medium}M/{self.n_heavy}H N={self.n_robots}"


@dataclass(frozen=True)
class RobotBody:
    id: int
    position: np.ndarray
    heading: float
    linear_velocity: np.ndarray
    angular_velocity: float
    last_command: tuple
    body_radius: float


@dataclass(frozen=True)
class TransportObject:
    id: int
    position: np.ndarray
    goal: np.ndarray
    velocity: np.ndarray
    mass: float
    weight_class: WeightClass
    completed: bool
    disc_radius: float


@dataclass
class WorldState:
    """Full simulator state stored as per-entity arrays.

    ``robots`` and ``objects`` give per-entity record views; the arrays are the
    source of truth.
    """

    config: ScenarioConfig
    robot_pos: np.ndarray
    robot_heading: np.ndarray
    robot_vel: np.ndarray
    robot_omega: np.ndarray
    robot_cmd: np.ndarray
    obj_pos: np.ndarray
    obj_goal: np.ndarray
    obj_vel: np.ndarray
    obj_class: np.ndarray
    obj_mass: np.ndarray
    completed: np.ndarray
    step_index: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    @property
    def n_robots(self) -> int:
        return len(self.robot_pos)

    @property
    def n_objects(self) -> int:
        return len(self.obj_pos)

    @property
    def done(self) -> bool:
        return self.step_index >= self.config.episode_length

    @property
    def robots(self) -> list:
        cfg = self.config
        return [
            RobotBody(
                id=i,
                position=self.robot_pos[i].copy(),
                heading=float(self.robot_heading[i]),
                linear_velocity=self.robot_vel[i].copy(),
                angular_velocity=float(self.robot_omega[i]),
                last_command=(int(self.robot_cmd[i, 0]), int(self.robot_cmd[i, 1])),
                body_radius=cfg.body_radius,
            )
            for i in range(self.n_robots)
        ]

    @property
    def objects(self) -> list:
        cfg = self.config
        return [
            TransportObject(
                id=l,
                position=self.obj_pos[l].copy(),
                goal=self.obj_goal[l].copy(),
                velocity=self.obj_vel[l].copy(),
                mass=float(self.obj_mass[l]),
                weight_class=WeightClass(int(self.obj_class[l])),
                completed=bool(self.completed[l]),
                disc_radius=cfg.disc_radius,
            )
            for l in range(self.n_objects)
        ]

    def transportable(self) -> np.ndarray:
        return self.obj_class != WeightClass.HEAVY

    def copy(self) -> "WorldState":
        return replace(
            self,
            robot_pos=self.robot_pos.copy(),
            robot_heading=self.robot_heading.copy(),
            robot_vel=self.robot_vel.copy(),
            robot_omega=self.robot_omega.copy(),
            robot_cmd=self.robot_cmd.copy(),
            obj_pos=self.obj_pos.copy(),
            obj_goal=self.obj_goal.copy(),
            obj_vel=self.obj_vel.copy(),
            obj_class=self.obj_class.copy(),
            obj_mass=self.obj_mass.copy(),
            completed=self.completed.copy(),
        )

    def same_as(self, other: "WorldState") -> bool:
        """Bit-level equality of every physical array and the step index."""
        names = (
            "robot_pos", "robot_heading", "robot_vel", "robot_omega", "robot_cmd",
            "obj_pos", "obj_goal", "obj_vel", "obj_class", "obj_mass", "completed",
        )
        if self.step_index != other.step_index:
            return False
        return all(
            getattr(self, n).tobytes() == getattr(other, n).tobytes() for n in names
        )


def wrap_angle(a: float) -> float:
    """Map an angle to [-pi, pi)."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w < 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def _uniform_disc(rng: np.random.Generator, radius: float) -> np.ndarray:
    r = radius * math.sqrt(rng.random())
    t = 2.0 * math.pi * rng.random()
    return np.array([r * math.cos(t), r * math.sin(t)])


def _ring(n: int, radius: float) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n) / n
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def reference_layout(config: ScenarioConfig):
    """Reference robot, object, and goal positions on their rings."""
    return (
        _ring(config.n_robots, config.robot_ring),
        _ring(config.n_objects, config.object_ring),
        _ring(config.n_objects, config.goal_ring),
    )


def _overlaps(robots: np.ndarray, objects: np.ndarray, cfg: ScenarioConfig) -> bool:
    bodies = np.concatenate([robots, objects])
    radii = np.concatenate(
        [np.full(len(robots), cfg.body_radius), np.full(len(objects), cfg.disc_radius)]
    )
    diff = bodies[:, None, :] - bodies[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    limit = radii[:, None] + radii[None, :]
    iu = np.triu_indices(len(bodies), k=1)
    return bool(np.any(dist[iu] < limit[iu]))


def reset(config: ScenarioConfig, seed: int, max_attempts: int = 100) -> WorldState:
    rng = np.random.default_rng(seed)
    n, m = config.n_robots, config.n_objects

    classes = np.repeat(np.arange(3), config.class_counts)
    classes = classes[rng.permutation(m)]

    robot_ref, obj_ref, goals = reference_layout(config)
    for _ in range(max_attempts):
        robots = robot_ref + np.array([_uniform_disc(rng, config.robot_jitter) for _ in range(n)]).reshape(n, 2)
        objects = obj_ref + np.array([_uniform_disc(rng, config.object_jitter) for _ in range(m)]).reshape(m, 2)
        if not _overlaps(robots, objects, config):
            break
    else:
        raise InfeasibleLayout(
            f"no overlap-free placement for {config.describe()} after {max_attempts} attempts"
        )
    headings = rng.uniform(-np.pi, np.pi, size=n)

    return WorldState(
        config=config,
        robot_pos=robots,
        robot_heading=headings,
        robot_vel=np.zeros((n, 2)),
        robot_omega=np.zeros(n),
        robot_cmd=np.zeros((n, 2), dtype=np.int64),
        obj_pos=objects,
        obj_goal=goals,
        obj_vel=np.zeros((m, 2)),
        obj_class=classes.astype(np.int64),
        obj_mass=np.asarray(config.masses, dtype=float)[classes],
        completed=np.zeros(m, dtype=bool),
        step_index=0,
        rng=rng,
    )


def goal_distances(state: WorldState) -> np.ndarray:
    return np.linalg.norm(state.obj_goal - state.obj_pos, axis=1)


def completion_flags(state: WorldState) -> np.ndarray:
    return goal_distances(state) <= state.config.goal_radius


def step(state: WorldState, commands: Sequence) -> WorldState:
    """Advance one control step.

    ``commands`` holds one ``(move, turn)`` pair per robot with entries in
    {-1, 0, +1}; ``move=+1`` drives forward and ``turn=+1`` turns left.
    """
    cfg = state.config
    n, m = state.n_robots, state.n_objects
    cmd = np.asarray(commands, dtype=np.int64).reshape(-1, 2) if n else np.zeros((0, 2), np.int64)
    if cmd.shape[0] != n:
        raise ValueError(f"expected {n} commands, got {cmd.shape[0]}")
    if np.any(np.abs(cmd) > 1):
        raise ValueError("command entries must be in {-1, 0, +1}")

    dt = cfg.physics_dt
    r_sum = cfg.body_radius + cfg.disc_radius
    r_sum2 = r_sum * r_sum
    rr = 2.0 * cfg.body_radius
    k_c, f_max = cfg.contact_stiffness, cfg.max_push_force
    depth_cap = f_max / k_c
    mu_s, mu_k, g = cfg.static_friction, cfg.kinetic_friction, cfg.gravity

    # plain floats: the bodies are few and numpy per-element overhead dominates
    rx = state.robot_pos[:, 0].tolist()
    ry = state.robot_pos[:, 1].tolist()
    th = state.robot_heading.tolist()
    v_cmd = (cmd[:, 0] * cfg.max_speed).tolist()
    w_cmd = (cmd[:, 1] * cfg.max_turn_rate).tolist()
    ox = state.obj_pos[:, 0].tolist()
    oy = state.obj_pos[:, 1].tolist()
    wx = state.obj_vel[:, 0].tolist()
    wy = state.obj_vel[:, 1].tolist()
    mass = state.obj_mass.tolist()
    vx = [0.0] * n
    vy = [0.0] * n

    for _ in range(cfg.physics_substeps):
        for i in range(n):
            # "+ 0.0" turns a signed zero into +0.0 so an idle robot stays bit-identical
            vx[i] = v_cmd[i] * math.cos(th[i]) + 0.0
            vy[i] = v_cmd[i] * math.sin(th[i]) + 0.0

        # robot -> object penalty contact, capped per robot
        fx = [0.0] * m
        fy = [0.0] * m
        for i in range(n):
            for l in range(m):
                dx = ox[l] - rx[i]
                dy = oy[l] - ry[i]
                d2 = dx * dx + dy * dy
                if d2 >= r_sum2:
                    continue
                d = math.sqrt(d2)
                if d > 0.0:
                    nx, ny = dx / d, dy / d
                else:
                    nx, ny = 1.0, 0.0
                f = min(k_c * (r_sum - d), f_max)
                assert f <= f_max
                fx[l] += f * nx
                fy[l] += f * ny

        for l in range(m):
            fn = math.hypot(fx[l], fy[l])
            speed = math.hypot(wx[l], wy[l])
            fric = mu_k * mass[l] * g
            if speed == 0.0:
                if fn <= mu_s * mass[l] * g:
                    continue
                ax = (fx[l] - fric * fx[l] / fn) / mass[l]
                ay = (fy[l] - fric * fy[l] / fn) / mass[l]
                wx[l] = ax * dt
                wy[l] = ay * dt
            else:
                ux, uy = wx[l] / speed, wy[l] / speed
                nwx = wx[l] + (fx[l] - fric * ux) / mass[l] * dt
                nwy = wy[l] + (fy[l] - fric * uy) / mass[l] * dt
                if nwx * wx[l] + nwy * wy[l] <= 0.0:
                    # friction cannot reverse motion: the object comes to rest
                    nwx = nwy = 0.0
                wx[l], wy[l] = nwx, nwy
            ox[l] += wx[l] * dt
            oy[l] += wy[l] * dt

        # robots may not drive deeper than the force-saturation depth
        for i in range(n):
            for l in range(m):
                dx = ox[l] - rx[i]
                dy = oy[l] - ry[i]
                d2 = dx * dx + dy * dy
                if d2 >= r_sum2:
                    continue
                d = math.sqrt(d2)
                if r_sum - d < depth_cap:
                    continue
                if d > 0.0:
                    nx, ny = dx / d, dy / d
                else:
                    nx, ny = 1.0, 0.0
                rel = (vx[i] - wx[l]) * nx + (vy[i] - wy[l]) * ny
                if rel > 0.0:
                    vx[i] -= rel * nx
                    vy[i] -= rel * ny

        for i in range(n):
            rx[i] += vx[i] * dt
            ry[i] += vy[i] * dt
            th[i] = wrap_angle(th[i] + w_cmd[i] * dt)

        for i in range(n):
            for j in range(i + 1, n):
                dx = rx[j] - rx[i]
                dy = ry[j] - ry[i]
                d2 = dx * dx + dy * dy
                if d2 >= rr * rr:
                    continue
                d = math.sqrt(d2)
                if d > 0.0:
                    nx, ny = dx / d, dy / d
                else:
                    nx, ny = 1.0, 0.0
                half = 0.5 * (rr - d)
                rx[i] -= half * nx
                ry[i] -= half * ny
                rx[j] += half * nx
                ry[j] += half * ny

    new = state.copy()
    new.rng = state.rng
    new.robot_pos = np.array([rx, ry], dtype=float).T.reshape(n, 2)
    new.robot_heading = np.array(th, dtype=float)
    new.robot_vel = np.array([vx, vy], dtype=float).T.reshape(n, 2)
    new.robot_omega = np.array(w_cmd, dtype=float)
    new.robot_cmd = cmd.copy()
    new.obj_pos = np.array([ox, oy], dtype=float).T.reshape(m, 2)
    new.obj_vel = np.array([wx, wy], dtype=float).T.reshape(m, 2)
    new.completed = completion_flags(new)
    new.step_index = state.step_index + 1
    return new


def object_rewards(state: WorldState) -> np.ndarray:
    """Goal-directed velocity component of every object; zero inside the goal disc."""
    diff = state.obj_goal - state.obj_pos
    dist = np.linalg.norm(diff, axis=1)
    out = np.zeros(state.n_objects)
    active = dist > state.config.goal_radius
    out[active] = np.einsum("ij,ij->i", state.obj_vel[active], diff[active]) / dist[active]
    return out


def object_reward(state: WorldState, l: int) -> float:
    diff = state.obj_goal[l] - state.obj_pos[l]
    dist = math.hypot(diff[0], diff[1])
    if dist == 0.0 or dist <= state.config.goal_radius:
        return 0.0
    return float(state.obj_vel[l] @ diff) / dist


def team_reward(state: WorldState) -> float:
    return float(object_rewards(state).sum())


def nearest_other_object(state: WorldState, i: int, exclude: Optional[int]) -> Optional[int]:
    """Closest uncompleted object to robot ``i`` other than ``exclude`` (lowest id on ties)."""
    best, best_d = None, math.inf
    for l in range(state.n_objects):
        if l == exclude or state.completed[l]:
            continue
        d = float(np.hypot(*(state.obj_pos[l] - state.robot_pos[i])))
        if d < best_d:
            best, best_d = l, d
    return best


def robot_low_reward(state: WorldState, i: int, target: Optional[int]) -> float:
    """Per-robot control reward: target progress, collision penalty, approach bonus.

    ``target=None`` means no task remains and the robot holds position; the
    bonus then counts as earned so that finishing the work is never worth less
    than dawdling next to an unfinished object.
    """
    nearest = nearest_other_object(state, i, target)
    penalty = min(0.0, object_reward(state, nearest)) if nearest is not None else 0.0
    if target is None:
        return penalty + 1.0
    to_target = state.obj_pos[target] - state.robot_pos[i]
    approaching = float(state.robot_vel[i] @ to_target) > 0.0
    close = math.hypot(to_target[0], to_target[1]) < state.config.close_distance
    bonus = 1.0 if (approaching or close) else 0.0
    return object_reward(state, target) + penalty + bonus
