"""Greedy evaluation of checkpoints and of the scripted controller."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..nets import PolicyNets, load_checkpoint
from ..obs import ObsConfig
from ..priority import DEFAULT_K_PHI
from ..trainer import NotApplicable, TransportTask, check_applicable, collect_rollouts
from ..world import ScenarioConfig, reset, step, object_rewards, robot_low_reward
from .metrics import EvalReport, episode_outcome
from .scripted import scripted_commands
from .trajlog import TrajectoryWriter, header_record, step_record

SCRIPTED = "scripted"
EVAL_BATCH = 32


def log_path(log_dir, seed: int) -> Path:
    return Path(log_dir) / f"episode_{seed:08d}.jsonl"


def obs_config_from_tag(tag: str) -> ObsConfig:
    return ObsConfig.from_tag(tag)


def evaluate_nets(
    nets: PolicyNets,
    scenario: ScenarioConfig,
    episodes: int,
    seed_base: int,
    k_phi: float = DEFAULT_K_PHI,
    log_dir=None,
) -> EvalReport:
    """Run ``episodes`` greedy episodes seeded ``seed_base, seed_base + 1, ...``.

    Returns a not-applicable report when the network cannot run at this size.
    """
    layout = nets.layout
    try:
        check_applicable(layout, scenario)
    except NotApplicable as exc:
        return EvalReport.not_applicable(layout.variant, scenario, episodes, seed_base, str(exc))
    torch.set_num_threads(1)
    obs_cfg = obs_config_from_tag(layout.obs_tag)
    seeds = [seed_base + e for e in range(episodes)]
    outcomes = []
    for start in range(0, episodes, EVAL_BATCH):
        batch = seeds[start:start + EVAL_BATCH]
        tasks = [TransportTask(scenario, obs_cfg, layout.variant, k_phi) for _ in batch]
        writers = {}
        final = {}
        if log_dir is not None:
            for e, s in enumerate(batch):
                writers[e] = TrajectoryWriter(
                    log_path(log_dir, s), header_record(reset(scenario, s), s, layout.variant, layout.obs_tag)
                )

        def on_step(e, task, frame, team, lo):
            if e in writers:
                writers[e].write(step_record(
                    task.state, task.targets, task.priority_matrix(), frame.alpha, frame.beta, team, lo
                ))
            if task.state.done:
                final[e] = task.state.completed.copy()

        try:
            collect_rollouts(tasks, nets, scenario.episode_length, batch, greedy=True,
                             on_step=on_step, with_values=False)
        finally:
            for w in writers.values():
                w.close()
        for e, s in enumerate(batch):
            outcomes.append(episode_outcome(s, final[e], tasks[e].state.obj_class))
    return EvalReport.from_outcomes(layout.variant, scenario, outcomes, seed_base)


def evaluate_checkpoint(path, scenario: ScenarioConfig, episodes: int, seed_base: int, log_dir=None) -> EvalReport:
    nets, manifest, _ = load_checkpoint(path)
    k_phi = manifest.get("meta", {}).get("setup", {}).get("k_phi", DEFAULT_K_PHI)
    return evaluate_nets(nets, scenario, episodes, seed_base, k_phi, log_dir)


def run_scripted_episode(scenario: ScenarioConfig, seed: int, writer: Optional[TrajectoryWriter] = None):
    state = reset(scenario, seed)
    m = scenario.n_objects
    while not state.done:
        targets, commands = scripted_commands(state)
        state = step(state, commands)
        if writer is not None:
            phi = np.zeros((scenario.n_robots, m))
            for i, t in enumerate(targets):
                if t is not None:
                    phi[i, t] = 1.0
            zeros = [0] * scenario.n_robots
            lo = [robot_low_reward(state, i, t) for i, t in enumerate(targets)]
            writer.write(step_record(state, targets, phi, zeros, zeros, float(object_rewards(state).sum()), lo))
    return state


def evaluate_scripted(scenario: ScenarioConfig, episodes: int, seed_base: int, log_dir=None) -> EvalReport:
    outcomes = []
    for e in range(episodes):
        seed = seed_base + e
        writer = None
        if log_dir is not None:
            writer = TrajectoryWriter(
                log_path(log_dir, seed), header_record(reset(scenario, seed), seed, SCRIPTED, "scripted")
            )
        try:
            state = run_scripted_episode(scenario, seed, writer)
        finally:
            if writer is not None:
                writer.close()
        outcomes.append(episode_outcome(seed, state.completed, state.obj_class))
    return EvalReport.from_outcomes(SCRIPTED, scenario, outcomes, seed_base)


def mean_hi_return(nets: PolicyNets, scenario: ScenarioConfig, episodes: int, seed_base: int,
                   k_phi: float = DEFAULT_K_PHI, sample_seed: Optional[int] = 0) -> float:
    """Mean episode team return over seeds ``seed_base, ...``.

    Actions are sampled with a generator seeded by ``sample_seed``; pass
    ``None`` for greedy actions.
    """
    obs_cfg = obs_config_from_tag(nets.layout.obs_tag)
    tasks = [TransportTask(scenario, obs_cfg, nets.layout.variant, k_phi) for _ in range(episodes)]
    greedy = sample_seed is None
    gen = None if greedy else torch.Generator().manual_seed(int(sample_seed))
    buf = collect_rollouts(tasks, nets, scenario.episode_length, [seed_base + e for e in range(episodes)],
                           gen, greedy=greedy, with_values=False)
    return float(np.mean(buf.episode_hi_returns))
