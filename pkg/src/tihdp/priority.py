"""Dynamic task priority layer.

Each robot keeps a priority vector over all objects. Its own allocation actor
nudges the entries of nearby objects up or down, and a global request/response
exchange lets other robots pull an object's priority up even when it is
outside the robot's local view. The transport target is the argmax.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_K_PHI = 0.1


class NoRemainingTask(LookupError):
    """All priorities are zero: every object is delivered, nothing to do."""


@dataclass
class PriorityVector:
    phi: np.ndarray
    k_phi: float = DEFAULT_K_PHI
    owner: int = 0

    @classmethod
    def uniform(cls, n_objects: int, k_phi: float = DEFAULT_K_PHI, owner: int = 0):
        return cls(np.full(n_objects, 1.0 / n_objects), k_phi, owner)

    def __len__(self):
        return len(self.phi)


@dataclass
class CommFrame:
    """Signals exchanged by all robots during one control step."""

    alpha: np.ndarray
    beta: np.ndarray
    d: np.ndarray
    sigma: np.ndarray
    request_sums: np.ndarray
    c_local: list
    c_bar: np.ndarray


def request_signal(alpha: int, target: int, n_objects: int) -> np.ndarray:
    if not 0 <= target < n_objects:
        raise IndexError(f"target {target} outside [0, {n_objects})")
    d = np.zeros(n_objects, dtype=np.int64)
    if alpha == 1:
        d[target] = 1
    return d


def response_signal(beta: int) -> int:
    return 1 if beta == 1 else 0


def map_local_ops(c_local: Sequence[int], neighbor_ids: Sequence[int], n_objects: int) -> np.ndarray:
    """Scatter per-slot priority operations to global object ids.

    Padded slots carry id ``-1`` and are skipped.
    """
    if len(c_local) != len(neighbor_ids):
        raise ValueError("c_local and neighbor_ids must have equal length")
    valid = [int(l) for l in neighbor_ids if l >= 0]
    if len(set(valid)) != len(valid):
        raise ValueError(f"duplicate neighbor ids {list(neighbor_ids)}")
    c_bar = np.zeros(n_objects, dtype=np.int64)
    for c, l in zip(c_local, neighbor_ids):
        if l < 0:
            continue
        if c not in (-1, 1):
            raise ValueError(f"priority operation must be -1 or +1, got {c}")
        c_bar[l] = c
    return c_bar


def update_priorities(
    pv: PriorityVector,
    c_bar: np.ndarray,
    sigma: int,
    request_sums: np.ndarray,
    completed: np.ndarray,
) -> PriorityVector:
    """One first-order priority update followed by clamping and normalization.

    Completed objects are forced to zero. Negative entries are clamped before
    normalizing; if nothing positive remains the result is all-zero.
    """
    k = pv.k_phi
    raw = (1.0 - k) * pv.phi + k * (np.asarray(c_bar, float) + sigma * np.asarray(request_sums, float))
    raw = np.where(np.asarray(completed, bool), 0.0, raw)
    raw = np.maximum(raw, 0.0)
    total = raw.sum()
    phi = raw / total if total > 0.0 else np.zeros_like(raw)
    return PriorityVector(phi, k, pv.owner)


def select_target(pv: PriorityVector) -> int:
    """Highest-priority object; ties go to the lowest id."""
    phi = pv.phi if isinstance(pv, PriorityVector) else np.asarray(pv)
    if not np.any(phi > 0.0):
        raise NoRemainingTask("priority vector is all zero")
    return int(np.argmax(phi))


def comm_round(alphas: Sequence[int], betas: Sequence[int], targets: Sequence[int], n_objects: int):
    """Gather every robot's request row and response bit.

    Returns ``(d, request_sums, sigma)``. A robot without a target (``None`` or
    negative) cannot request anything.
    """
    n = len(alphas)
    d = np.zeros((n, n_objects), dtype=np.int64)
    for j, (a, t) in enumerate(zip(alphas, targets)):
        if t is not None and t >= 0:
            d[j] = request_signal(int(a), int(t), n_objects)
    sigma = np.array([response_signal(int(b)) for b in betas], dtype=np.int64)
    return d, d.sum(axis=0), sigma


class PriorityLayer:
    """Priority vectors and current targets for all robots of one world."""

    def __init__(self, n_robots: int, n_objects: int, k_phi: float = DEFAULT_K_PHI):
        self.n_objects = n_objects
        self.vectors = [PriorityVector.uniform(n_objects, k_phi, i) for i in range(n_robots)]
        self.targets = [select_target(v) for v in self.vectors]

    def advance(self, c_local, neighbor_ids, alphas, betas, completed) -> CommFrame:
        """Run one synchronous communication + update round for every robot.

        Requests are formed against the targets held before this round.
        """
        d, sums, sigma = comm_round(alphas, betas, self.targets, self.n_objects)
        c_bars = np.zeros((len(self.vectors), self.n_objects), dtype=np.int64)
        for i, pv in enumerate(self.vectors):
            c_bars[i] = map_local_ops(c_local[i], neighbor_ids[i], self.n_objects)
            self.vectors[i] = update_priorities(pv, c_bars[i], int(sigma[i]), sums, completed)
            try:
                self.targets[i] = select_target(self.vectors[i])
            except NoRemainingTask:
                self.targets[i] = None
        return CommFrame(
            alpha=np.asarray(alphas, dtype=np.int64),
            beta=np.asarray(betas, dtype=np.int64),
            d=d,
            sigma=sigma,
            request_sums=sums,
            c_local=[list(map(int, c)) for c in c_local],
            c_bar=c_bars,
        )

    def matrix(self) -> np.ndarray:
        return np.stack([v.phi for v in self.vectors])
