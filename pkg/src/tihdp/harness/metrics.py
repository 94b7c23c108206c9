"""Completion metrics.

An episode's score is the fraction of its transportable (Light and Medium)
objects whose completed flag is set at the final step. COR averages that
fraction over episodes; TOCR counts the episodes where it is exactly one.
Heavy objects never enter a denominator.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..world import WeightClass

NOT_APPLICABLE = "-"


@dataclass(frozen=True)
class EpisodeOutcome:
    seed: int
    delivered: int
    transportable: int

    @property
    def fraction(self) -> float:
        # nothing to deliver counts as a complete episode
        return 1.0 if self.transportable == 0 else self.delivered / self.transportable

    @property
    def all_delivered(self) -> bool:
        return self.delivered == self.transportable


def episode_outcome(seed: int, completed: Sequence[bool], classes: Sequence[int]) -> EpisodeOutcome:
    completed = np.asarray(completed, dtype=bool)
    movable = np.asarray(classes) != int(WeightClass.HEAVY)
    return EpisodeOutcome(int(seed), int((completed & movable).sum()), int(movable.sum()))


def completed_object_ratio(outcomes: Sequence[EpisodeOutcome]) -> float:
    if not outcomes:
        raise ValueError("no episodes")
    return float(np.mean([o.fraction for o in outcomes]))


def total_completion_ratio(outcomes: Sequence[EpisodeOutcome]) -> float:
    if not outcomes:
        raise ValueError("no episodes")
    return float(np.mean([o.all_delivered for o in outcomes]))


@dataclass
class EvalReport:
    """Outcome of one policy on one scenario, shaped like a results-table row."""

    variant: str
    n_robots: int
    n_light: int
    n_medium: int
    n_heavy: int
    episodes: int
    seed_base: int
    cor: Optional[float] = None
    tocr: Optional[float] = None
    rows: list = field(default_factory=list)
    reason: str = ""

    @property
    def applicable(self) -> bool:
        return self.cor is not None

    @classmethod
    def from_outcomes(cls, variant, scenario, outcomes, seed_base):
        return cls(
            variant=variant,
            n_robots=scenario.n_robots,
            n_light=scenario.n_light,
            n_medium=scenario.n_medium,
            n_heavy=scenario.n_heavy,
            episodes=len(outcomes),
            seed_base=seed_base,
            cor=completed_object_ratio(outcomes),
            tocr=total_completion_ratio(outcomes),
            rows=[{**asdict(o), "fraction": o.fraction} for o in outcomes],
        )

    @classmethod
    def not_applicable(cls, variant, scenario, episodes, seed_base, reason):
        return cls(variant, scenario.n_robots, scenario.n_light, scenario.n_medium,
                   scenario.n_heavy, episodes, seed_base, reason=reason)

    def cell(self, which: str) -> str:
        value = {"cor": self.cor, "tocr": self.tocr}[which]
        return NOT_APPLICABLE if value is None else f"{value:.3f}"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "scenario": {
                "light": self.n_light, "medium": self.n_medium, "heavy": self.n_heavy,
                "n_robots": self.n_robots,
            },
            "episodes": self.episodes,
            "seed_base": self.seed_base,
            "applicable": self.applicable,
            "COR": self.cell("cor"),
            "TOCR": self.cell("tocr"),
            "cor_value": self.cor,
            "tocr_value": self.tocr,
            "reason": self.reason,
            "episodes_detail": self.rows,
        }


def format_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table with one row per scenario and policy."""
    head = f"{'L/M/H':<8} {'N':>2}  {'variant':<20} {'COR':>6} {'TOCR':>6}"
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(
            f"{r.n_light}/{r.n_medium}/{r.n_heavy:<4} {r.n_robots:>2}  {r.variant:<20} "
            f"{r.cell('cor'):>6} {r.cell('tocr'):>6}"
        )
    return "\n".join(lines)
