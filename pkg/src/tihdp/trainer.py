"""Centralized-critic PPO over parallel cooperative-transport worlds.

One shared allocation actor and one shared control actor act for every robot
from local observations; the critics see the full world state. Both levels
are updated in the same cycle, each on its own reward.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
from torch import nn

from . import obs as obs_mod
from .nets import (
    ActionDistribution,
    NetLayout,
    PolicyNets,
    init_params,
    load_checkpoint,
    lo_critic_extra,
    save_checkpoint,
)
from .obs import ObsConfig
from .priority import DEFAULT_K_PHI, CommFrame, PriorityLayer
from .world import ScenarioConfig, WorldState, object_rewards, reset, robot_low_reward, step

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """A PPO loss became non-finite; the update was aborted."""


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    epochs: int = 4
    minibatches: int = 8
    max_grad_norm: float = 0.5
    bptt_chunk: int = 32
    n_envs: int = 64
    total_steps: int = 50_000

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be positive")
        if min(self.epochs, self.minibatches, self.bptt_chunk, self.n_envs) < 1:
            raise ValueError("epochs, minibatches, bptt_chunk and n_envs must be >= 1")


def make_layout(variant: str, scenario: ScenarioConfig, obs_cfg: ObsConfig, hidden=(256, 128, 64)) -> NetLayout:
    n, m = scenario.n_robots, scenario.n_objects
    hi_dim = obs_mod.baseline_global_dim(n, m) if variant == "two-layered-global" else obs_cfg.high_dim
    return NetLayout(
        variant=variant,
        obs_tag=obs_cfg.tag,
        hi_obs_dim=hi_dim,
        global_dim=obs_mod.global_dim(n, m),
        n_robots=n,
        n_objects=m,
        K=obs_cfg.K,
        hidden=tuple(hidden),
    )


class NotApplicable(ValueError):
    """A trained network cannot run on a scenario of this size."""


def check_applicable(layout: NetLayout, scenario: ScenarioConfig) -> None:
    """Local-observation variants run anywhere; the global baseline only at its training size."""
    if layout.variant == "two-layered-global" and (
        scenario.n_robots != layout.n_robots or scenario.n_objects != layout.n_objects
    ):
        raise NotApplicable(
            f"two-layered-global was built for N={layout.n_robots}, M={layout.n_objects}; "
            f"scenario has N={scenario.n_robots}, M={scenario.n_objects}"
        )


# -- one world with its decision state ----------------------------------------


class TransportTask:
    """A world plus each robot's priorities, neighbor slots, and targets."""

    def __init__(self, scenario: ScenarioConfig, obs_cfg: ObsConfig, variant: str, k_phi: float = DEFAULT_K_PHI):
        self.scenario = scenario
        self.obs_cfg = obs_cfg
        self.variant = variant
        self.k_phi = k_phi
        self.state: Optional[WorldState] = None
        self.priorities: Optional[PriorityLayer] = None
        self.targets: list = []
        self.neighbors: list = []
        self.seed: Optional[int] = None

    @property
    def n_robots(self) -> int:
        return self.scenario.n_robots

    def reset(self, seed: int) -> None:
        self.seed = int(seed)
        self.state = reset(self.scenario, self.seed)
        n, m = self.scenario.n_robots, self.scenario.n_objects
        self.priorities = PriorityLayer(n, m, self.k_phi)
        if self.variant.startswith("tihdp"):
            self.targets = list(self.priorities.targets)
        else:
            self.targets = [None] * n

    def high_observations(self):
        """Allocation inputs and option masks, one row per robot."""
        s, cfg = self.state, self.obs_cfg
        rows, masks = [], []
        self.neighbors = [obs_mod.nearest_entities(s, i, cfg.J, cfg.K) for i in range(s.n_robots)]
        for i in range(s.n_robots):
            if self.variant == "two-layered-global":
                rows.append(obs_mod.build_baseline_obs(s, i, "global"))
                masks.append(~s.completed)
            else:
                rows.append(obs_mod.build_high_obs(s, i, cfg, self.neighbors[i]))
                masks.append(np.array([l >= 0 for l in self.neighbors[i][1]]))
        return np.stack(rows), np.stack(masks)

    def apply_high(self, actions: np.ndarray) -> CommFrame:
        """Turn allocation actions into targets; returns the step's signal frame."""
        s = self.state
        n, m, K = s.n_robots, s.n_objects, self.obs_cfg.K
        if self.variant.startswith("tihdp"):
            c_local = [2 * actions[i, :K] - 1 for i in range(n)]
            if self.variant == "tihdp-with-com":
                alphas, betas = actions[:, K].tolist(), actions[:, K + 1].tolist()
            else:
                alphas, betas = [0] * n, [0] * n
            ids = [self.neighbors[i][1] for i in range(n)]
            frame = self.priorities.advance(c_local, ids, alphas, betas, s.completed)
            self.targets = list(self.priorities.targets)
            return frame
        targets = []
        for i in range(n):
            a = int(actions[i, 0])
            if self.variant == "two-layered-global":
                targets.append(None if s.completed.all() else a)
            else:
                l = self.neighbors[i][1][a]
                targets.append(None if l < 0 else int(l))
        self.targets = targets
        phi = np.zeros((n, m))
        for i, t in enumerate(targets):
            if t is not None:
                phi[i, t] = 1.0
        zeros = np.zeros(n, dtype=np.int64)
        return CommFrame(zeros, zeros, np.zeros((n, m), np.int64), zeros, np.zeros(m, np.int64), [], np.zeros((n, m), np.int64))

    def priority_matrix(self) -> np.ndarray:
        if self.variant.startswith("tihdp"):
            return self.priorities.matrix()
        phi = np.zeros((self.state.n_robots, self.state.n_objects))
        for i, t in enumerate(self.targets):
            if t is not None:
                phi[i, t] = 1.0
        return phi

    def low_observations(self) -> np.ndarray:
        return np.stack([obs_mod.build_low_obs(self.state, i, t) for i, t in enumerate(self.targets)])

    def apply_low(self, commands) -> tuple:
        """Step the world; returns ``(team reward, per-robot control rewards)``."""
        self.state = step(self.state, commands)
        team = float(object_rewards(self.state).sum())
        lo = np.array([robot_low_reward(self.state, i, t) for i, t in enumerate(self.targets)])
        return team, lo


def action_to_command(a) -> tuple:
    """Categorical indices {0, 1, 2} map to command values {-1, 0, +1}."""
    return int(a[0]) - 1, int(a[1]) - 1


# -- rollout storage -----------------------------------------------------------


@dataclass
class RolloutBuffer:
    """Step-aligned experience of E worlds, N robots, T steps."""

    hi_obs: np.ndarray          # (E, T, N, D_hi)
    hi_mask: np.ndarray         # (E, T, N, A_opts)
    hi_actions: np.ndarray      # (E, T, N, A_hi)
    hi_logp: np.ndarray         # (E, T, N)
    hi_h0: np.ndarray           # (E, T, N, W) recurrent state before the step
    hi_c0: np.ndarray
    lo_obs: np.ndarray          # (E, T, N, 24)
    lo_actions: np.ndarray      # (E, T, N, 2)
    lo_logp: np.ndarray         # (E, T, N)
    lo_valid: np.ndarray        # (E, T, N) robot had a target
    gstate: np.ndarray          # (E, T, G)
    lo_extra: np.ndarray        # (E, T, N, N + M)
    hi_rewards: np.ndarray      # (E, T)
    lo_rewards: np.ndarray      # (E, T, N)
    hi_values: np.ndarray       # (E, T)
    lo_values: np.ndarray       # (E, T, N)
    dones: np.ndarray           # (E, T)
    alphas: np.ndarray          # (E, T, N)
    betas: np.ndarray           # (E, T, N)
    episode_hi_returns: list = field(default_factory=list)
    episode_lo_returns: list = field(default_factory=list)

    @property
    def shape(self):
        return self.hi_rewards.shape + (self.lo_rewards.shape[-1],)

    def arrays(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if isinstance(v, np.ndarray)}


def collect_rollouts(
    tasks: list,
    nets: PolicyNets,
    T: int,
    seeds,
    generator: Optional[torch.Generator] = None,
    greedy: bool = False,
    on_step: Optional[Callable] = None,
    with_values: bool = True,
) -> RolloutBuffer:
    """Run each task for ``T`` control steps from a fresh reset.

    ``seeds[e]`` seeds world ``e``. Actions are sampled from ``generator``
    unless ``greedy``. ``on_step(e, task, frame, team_reward, lo_rewards)`` is
    called after every world step (used for trajectory logging). Critic
    values are skipped when ``with_values`` is false or the world size differs
    from the one the critics were built for.
    """
    E = len(tasks)
    if E == 0:
        raise ValueError("no environments")
    layout = nets.layout
    for task in tasks:
        check_applicable(layout, task.scenario)
        if task.variant != layout.variant:
            raise ValueError(f"task variant {task.variant} does not match network {layout.variant}")
    N = tasks[0].n_robots
    M = tasks[0].scenario.n_objects
    for e, task in enumerate(tasks):
        task.reset(seeds[e])
    if generator is None and not greedy:
        raise ValueError("sampling requires a generator")

    W = layout.rnn_width
    n_opts = layout.hi_outputs if layout.hi_kind == "categorical" else 1
    keep_critic = with_values and layout.n_robots == N and layout.n_objects == M
    G = layout.global_dim
    buf = RolloutBuffer(
        hi_obs=np.zeros((E, T, N, layout.hi_obs_dim), np.float32),
        hi_mask=np.ones((E, T, N, n_opts), bool),
        hi_actions=np.zeros((E, T, N, layout.hi_outputs if layout.hi_kind == "bernoulli" else 1), np.int64),
        hi_logp=np.zeros((E, T, N), np.float32),
        hi_h0=np.zeros((E, T, N, W), np.float32),
        hi_c0=np.zeros((E, T, N, W), np.float32),
        lo_obs=np.zeros((E, T, N, layout.low_obs_dim), np.float32),
        lo_actions=np.zeros((E, T, N, 2), np.int64),
        lo_logp=np.zeros((E, T, N), np.float32),
        lo_valid=np.zeros((E, T, N), bool),
        gstate=np.zeros((E, T, G if keep_critic else 0), np.float32),
        lo_extra=np.zeros((E, T, N, (N + M) if keep_critic else 0), np.float32),
        hi_rewards=np.zeros((E, T), np.float32),
        lo_rewards=np.zeros((E, T, N), np.float32),
        hi_values=np.zeros((E, T), np.float32),
        lo_values=np.zeros((E, T, N), np.float32),
        dones=np.zeros((E, T), bool),
        alphas=np.zeros((E, T, N), np.int64),
        betas=np.zeros((E, T, N), np.int64),
    )
    h, c = nets.zero_state(E * N)
    ep_hi = np.zeros(E)
    ep_lo = np.zeros((E, N))
    ep_len = np.zeros(E, dtype=np.int64)
    K = tasks[0].obs_cfg.K

    with torch.no_grad():
        for t in range(T):
            hi_rows, masks = zip(*(task.high_observations() for task in tasks))
            hi_obs = np.concatenate(hi_rows).astype(np.float32)
            buf.hi_obs[:, t] = hi_obs.reshape(E, N, -1)
            buf.hi_h0[:, t] = h.numpy().reshape(E, N, W)
            buf.hi_c0[:, t] = c.numpy().reshape(E, N, W)
            mask = None
            if layout.hi_kind == "categorical":
                m_arr = np.concatenate(masks)
                m_arr[~m_arr.any(-1)] = True
                buf.hi_mask[:, t] = m_arr.reshape(E, N, -1)
                mask = torch.from_numpy(m_arr)
            logits, (h, c) = nets.hi_actor(torch.from_numpy(hi_obs), (h, c))
            dist = ActionDistribution(layout.hi_kind, logits, mask)
            a_hi = dist.mode() if greedy else dist.sample(generator)
            if layout.hi_kind == "categorical":
                a_hi = a_hi.unsqueeze(-1)
                buf.hi_logp[:, t] = dist.log_prob(a_hi.squeeze(-1)).numpy().reshape(E, N)
            else:
                buf.hi_logp[:, t] = dist.log_prob(a_hi).numpy().reshape(E, N)
            a_hi_np = a_hi.numpy().reshape(E, N, -1)
            buf.hi_actions[:, t] = a_hi_np

            frames = [task.apply_high(a_hi_np[e]) for e, task in enumerate(tasks)]
            if layout.variant == "tihdp-with-com":
                buf.alphas[:, t] = a_hi_np[:, :, K]
                buf.betas[:, t] = a_hi_np[:, :, K + 1]

            lo_obs = np.concatenate([task.low_observations() for task in tasks]).astype(np.float32)
            buf.lo_obs[:, t] = lo_obs.reshape(E, N, -1)
            lo_dist = ActionDistribution("pair", nets.lo_actor(torch.from_numpy(lo_obs)))
            a_lo = lo_dist.mode() if greedy else lo_dist.sample(generator)
            buf.lo_logp[:, t] = lo_dist.log_prob(a_lo).numpy().reshape(E, N)
            a_lo_np = a_lo.numpy().reshape(E, N, 2)
            buf.lo_actions[:, t] = a_lo_np

            if keep_critic:
                g = np.stack([obs_mod.build_global_state(task.state) for task in tasks]).astype(np.float32)
                extra = np.stack([
                    np.stack([lo_critic_extra(i, tgt, N, M) for i, tgt in enumerate(task.targets)])
                    for task in tasks
                ]).astype(np.float32)
                buf.gstate[:, t] = g
                buf.lo_extra[:, t] = extra
                gt = torch.from_numpy(g)
                buf.hi_values[:, t] = nets.hi_critic(gt).numpy()
                lo_in = torch.cat([gt.unsqueeze(1).expand(E, N, G), torch.from_numpy(extra)], dim=-1)
                buf.lo_values[:, t] = nets.lo_critic(lo_in).numpy()

            for e, task in enumerate(tasks):
                valid = np.array([tgt is not None for tgt in task.targets])
                buf.lo_valid[e, t] = valid
                commands = [action_to_command(a_lo_np[e, i]) if valid[i] else (0, 0) for i in range(N)]
                team, lo = task.apply_low(commands)
                buf.hi_rewards[e, t] = team
                buf.lo_rewards[e, t] = lo
                ep_hi[e] += team
                ep_lo[e] += lo
                ep_len[e] += 1
                if on_step is not None:
                    on_step(e, task, frames[e], team, lo)
                if task.state.done:
                    buf.dones[e, t] = True
                    buf.episode_hi_returns.append(float(ep_hi[e]))
                    buf.episode_lo_returns.append(float(ep_lo[e].mean()))
                    ep_hi[e] = 0.0
                    ep_lo[e] = 0.0
                    ep_len[e] = 0
                    if t + 1 < T:
                        task.reset(task.seed + 1_000_003)
                    sl = slice(e * N, (e + 1) * N)
                    h[sl] = 0.0
                    c[sl] = 0.0
    return buf


# -- advantages ------------------------------------------------------------------


def compute_gae(rewards, values, dones, gamma: float, lam: float, bootstrap=0.0):
    """Generalized advantage estimates along the last axis.

    ``bootstrap`` is the value of the state after the final step; ``dones``
    marks steps after which the episode ended.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    T = rewards.shape[-1]
    adv = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(bootstrap, dtype=np.float64), rewards.shape[:-1]).copy()
    running = np.zeros(rewards.shape[:-1])
    for t in range(T - 1, -1, -1):
        delta = rewards[..., t] + gamma * next_value * notdone[..., t] - values[..., t]
        running = delta + gamma * lam * notdone[..., t] * running
        adv[..., t] = running
        next_value = values[..., t]
    return adv, adv + values


# -- PPO update --------------------------------------------------------------------


@dataclass
class TrainReport:
    hi_policy_loss: float = 0.0
    hi_value_loss: float = 0.0
    hi_entropy: float = 0.0
    hi_clip_frac: float = 0.0
    lo_policy_loss: float = 0.0
    lo_value_loss: float = 0.0
    lo_entropy: float = 0.0
    lo_clip_frac: float = 0.0
    hi_grad_norm: float = 0.0
    lo_grad_norm: float = 0.0


def clipped_surrogate(ratio: torch.Tensor, adv: torch.Tensor, eps: float) -> torch.Tensor:
    surr = torch.min(ratio * adv, torch.clamp(ratio, 1.0 - eps, 1.0 + eps) * adv)
    assert torch.all(surr <= torch.max(ratio * adv, torch.clamp(ratio, 1.0 - eps, 1.0 + eps) * adv))
    return surr


def _normalize(adv: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    sel = adv if mask is None else adv[mask]
    if sel.size < 2:
        return adv - (sel.mean() if sel.size else 0.0)
    return (adv - sel.mean()) / (sel.std() + 1e-8)


def make_optimizers(nets: PolicyNets, lr: float):
    hi = list(nets.hi_actor.parameters()) + list(nets.hi_critic.parameters())
    lo = list(nets.lo_actor.parameters()) + list(nets.lo_critic.parameters())
    return torch.optim.Adam(hi, lr=lr, eps=1e-5), torch.optim.Adam(lo, lr=lr, eps=1e-5)


def _clip(actor: nn.Module, critic: nn.Module, max_norm: float) -> float:
    """Clip actor and critic gradients separately; returns the actor's pre-clip norm.

    Value targets can be two orders of magnitude larger than policy-loss
    gradients, so a joint norm would let the critic starve the actor.
    """
    nn.utils.clip_grad_norm_(critic.parameters(), max_norm)
    return float(nn.utils.clip_grad_norm_(actor.parameters(), max_norm))


def _check_finite(loss: torch.Tensor, what: str, parts: dict) -> None:
    if not torch.isfinite(loss):
        diag = {k: float(torch.as_tensor(v).detach()) for k, v in parts.items()}
        raise TrainingDiverged(f"non-finite {what} loss; components {diag}")


def ppo_update(nets: PolicyNets, buf: RolloutBuffer, config: PpoConfig, optimizers, generator: torch.Generator) -> TrainReport:
    """Clipped-PPO epochs for both levels. Parameters are modified in place."""
    E, T, N = buf.shape
    layout = nets.layout
    hi_opt, lo_opt = optimizers
    eps = config.clip_eps

    hi_adv, hi_ret = compute_gae(buf.hi_rewards, buf.hi_values, buf.dones, config.gamma, config.gae_lambda)
    lo_adv, lo_ret = compute_gae(
        np.moveaxis(buf.lo_rewards, 2, 1), np.moveaxis(buf.lo_values, 2, 1),
        np.repeat(buf.dones[:, None, :], N, axis=1), config.gamma, config.gae_lambda,
    )
    lo_adv, lo_ret = np.moveaxis(lo_adv, 1, 2), np.moveaxis(lo_ret, 1, 2)
    hi_adv = _normalize(hi_adv)
    lo_adv = _normalize(lo_adv, buf.lo_valid)

    # allocation level: (E*N) sequences cut into chunks with stored initial states
    L = min(config.bptt_chunk, T)
    n_chunks = math.ceil(T / L)
    pad = n_chunks * L - T

    def seq(x, fill=0):
        x = np.moveaxis(x, 2, 1)  # (E, N, T, ...)
        x = x.reshape((E * N, T) + x.shape[3:])
        if pad:
            widths = [(0, 0), (0, pad)] + [(0, 0)] * (x.ndim - 2)
            x = np.pad(x, widths, constant_values=fill)
        return x.reshape((E * N * n_chunks, L) + x.shape[2:])

    c_obs = torch.from_numpy(seq(buf.hi_obs))
    c_act = torch.from_numpy(seq(buf.hi_actions))
    c_mask = torch.from_numpy(seq(buf.hi_mask, fill=True))
    c_logp = torch.from_numpy(seq(buf.hi_logp))
    c_adv = torch.from_numpy(seq(np.repeat(hi_adv[:, :, None], N, axis=2)).astype(np.float32))
    c_valid = torch.from_numpy(seq(np.ones((E, T, N), bool), fill=False))
    c_h0 = torch.from_numpy(seq(buf.hi_h0)[:, 0])
    c_c0 = torch.from_numpy(seq(buf.hi_c0)[:, 0])
    starts = np.zeros((E, T, N), bool)
    starts[:, 0] = True
    starts[:, 1:] = buf.dones[:, :-1, None]
    c_starts = torch.from_numpy(seq(starts))

    g_flat = torch.from_numpy(buf.gstate.reshape(E * T, -1))
    hi_ret_flat = torch.from_numpy(hi_ret.reshape(-1).astype(np.float32))
    lo_obs = torch.from_numpy(buf.lo_obs.reshape(E * T * N, -1))
    lo_act = torch.from_numpy(buf.lo_actions.reshape(E * T * N, 2))
    lo_logp_old = torch.from_numpy(buf.lo_logp.reshape(-1))
    lo_adv_t = torch.from_numpy(lo_adv.reshape(-1).astype(np.float32))
    lo_valid = torch.from_numpy(buf.lo_valid.reshape(-1))
    lo_ret_t = torch.from_numpy(lo_ret.reshape(-1).astype(np.float32))
    lo_critic_in = torch.cat(
        [torch.from_numpy(np.repeat(buf.gstate[:, :, None, :], N, axis=2)), torch.from_numpy(buf.lo_extra)], dim=-1
    ).reshape(E * T * N, -1)

    report = TrainReport()
    n_updates = 0
    n_mb = config.minibatches
    for _ in range(config.epochs):
        hi_perm = torch.randperm(c_obs.shape[0], generator=generator)
        g_perm = torch.randperm(E * T, generator=generator)
        lo_perm = torch.randperm(E * T * N, generator=generator)
        for k in range(n_mb):
            # -- allocation actor + critic
            mb = hi_perm[k::n_mb]
            gb = g_perm[k::n_mb]
            if len(mb) and len(gb):
                obs_t = c_obs[mb].transpose(0, 1)
                logits, _ = nets.hi_actor.forward_sequence(
                    obs_t, (c_h0[mb], c_c0[mb]), c_starts[mb].transpose(0, 1)
                )
                logits = logits.transpose(0, 1)
                if layout.hi_kind == "categorical":
                    dist = ActionDistribution("categorical", logits, c_mask[mb])
                    new_logp = dist.log_prob(c_act[mb].squeeze(-1))
                else:
                    dist = ActionDistribution("bernoulli", logits)
                    new_logp = dist.log_prob(c_act[mb])
                valid = c_valid[mb].float()
                count = valid.sum().clamp(min=1.0)
                ratio = torch.exp(new_logp - c_logp[mb])
                surr = clipped_surrogate(ratio, c_adv[mb], eps)
                pol_loss = -(surr * valid).sum() / count
                ent = (dist.entropy() * valid).sum() / count
                v = nets.hi_critic(g_flat[gb])
                v_loss = ((v - hi_ret_flat[gb]) ** 2).mean()
                loss = pol_loss + config.value_coef * v_loss - config.entropy_coef * ent
                _check_finite(loss, "allocation", {"policy": pol_loss, "value": v_loss, "entropy": ent})
                hi_opt.zero_grad()
                loss.backward()
                report.hi_grad_norm += _clip(nets.hi_actor, nets.hi_critic, config.max_grad_norm)
                hi_opt.step()
                report.hi_policy_loss += pol_loss.item()
                report.hi_value_loss += v_loss.item()
                report.hi_entropy += ent.item()
                report.hi_clip_frac += float((((ratio - 1.0).abs() > eps).float() * valid).sum() / count)

            # -- control actor + critic
            lb = lo_perm[k::n_mb]
            if len(lb):
                ldist = ActionDistribution("pair", nets.lo_actor(lo_obs[lb]))
                new_logp = ldist.log_prob(lo_act[lb])
                valid = lo_valid[lb].float()
                count = valid.sum().clamp(min=1.0)
                ratio = torch.exp(new_logp - lo_logp_old[lb])
                surr = clipped_surrogate(ratio, lo_adv_t[lb], eps)
                pol_loss = -(surr * valid).sum() / count
                ent = (ldist.entropy() * valid).sum() / count
                v = nets.lo_critic(lo_critic_in[lb])
                v_loss = ((v - lo_ret_t[lb]) ** 2).mean()
                loss = pol_loss + config.value_coef * v_loss - config.entropy_coef * ent
                _check_finite(loss, "control", {"policy": pol_loss, "value": v_loss, "entropy": ent})
                lo_opt.zero_grad()
                loss.backward()
                report.lo_grad_norm += _clip(nets.lo_actor, nets.lo_critic, config.max_grad_norm)
                lo_opt.step()
                report.lo_policy_loss += pol_loss.item()
                report.lo_value_loss += v_loss.item()
                report.lo_entropy += ent.item()
                report.lo_clip_frac += float((((ratio - 1.0).abs() > eps).float() * valid).sum() / count)
            n_updates += 1
    for k in report.__dict__:
        setattr(report, k, getattr(report, k) / max(n_updates, 1))
    return report


# -- training loop -------------------------------------------------------------


@dataclass(frozen=True)
class TrainSetup:
    """Everything a training run depends on besides the seed."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    obs: ObsConfig = field(default_factory=ObsConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    variant: str = "tihdp-with-com"
    hidden: tuple = (256, 128, 64)
    head_gain: float = 0.01
    k_phi: float = DEFAULT_K_PHI
    checkpoint_every: int = 10


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint32)[0])


def episode_seeds(seed: int, update: int, n_envs: int) -> list:
    return [_derive_seed(seed, update, e, 1) for e in range(n_envs)]


def _optimizer_tensors(optimizers) -> tuple:
    tensors, steps = {}, {}
    for name, opt in zip(("hi", "lo"), optimizers):
        params = [p for g in opt.param_groups for p in g["params"]]
        for idx, p in enumerate(params):
            st = opt.state.get(p)
            if not st:
                continue
            tensors[f"optim/{name}/{idx}/exp_avg"] = st["exp_avg"]
            tensors[f"optim/{name}/{idx}/exp_avg_sq"] = st["exp_avg_sq"]
            steps[f"{name}/{idx}"] = int(st["step"])
    return tensors, steps


def _restore_optimizers(optimizers, tensors: dict, steps: dict) -> None:
    for name, opt in zip(("hi", "lo"), optimizers):
        params = [p for g in opt.param_groups for p in g["params"]]
        for idx, p in enumerate(params):
            key = f"{name}/{idx}"
            if key not in steps:
                continue
            opt.state[p] = {
                "step": torch.tensor(float(steps[key])),
                "exp_avg": tensors[f"optim/{key}/exp_avg"].clone(),
                "exp_avg_sq": tensors[f"optim/{key}/exp_avg_sq"].clone(),
            }


def setup_to_dict(setup: TrainSetup) -> dict:
    d = asdict(setup)
    d["hidden"] = list(setup.hidden)
    d["scenario"]["masses"] = list(setup.scenario.masses)
    return d


def initial_nets(setup: TrainSetup, seed: int) -> PolicyNets:
    """The untrained networks a run with this setup and seed starts from."""
    layout = make_layout(setup.variant, setup.scenario, setup.obs, setup.hidden)
    return init_params(layout, _derive_seed(seed, 0, 0, 0), setup.head_gain)


def train(
    setup: TrainSetup,
    seed: int,
    out_dir,
    resume_from=None,
    max_updates: Optional[int] = None,
    progress: Optional[Callable] = None,
) -> dict:
    """Alternate rollout collection and PPO updates; write checkpoints and metrics.

    Every update collects one full episode per parallel world. Returns a dict
    with the final checkpoint path and the metrics records of this call.
    """
    torch.set_num_threads(1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ppo = setup.ppo
    T = setup.scenario.episode_length
    steps_per_update = T * ppo.n_envs
    total_updates = max(1, math.ceil(ppo.total_steps / steps_per_update))

    nets = initial_nets(setup, seed)
    layout = nets.layout
    optimizers = make_optimizers(nets, ppo.learning_rate)
    start = 0
    if resume_from is not None:
        loaded, manifest, tensors = load_checkpoint(resume_from)
        if loaded.layout != layout:
            raise ValueError("checkpoint layout does not match the training setup")
        nets.load_state_dict(loaded.state_dict())
        _restore_optimizers(optimizers, tensors, manifest["meta"]["optimizer_steps"])
        start = int(manifest["meta"]["update"])

    tasks = [TransportTask(setup.scenario, setup.obs, setup.variant, setup.k_phi) for _ in range(ppo.n_envs)]
    metrics_path = out / "metrics.jsonl"
    if start == 0 and metrics_path.exists():
        metrics_path.unlink()
    records = []
    last_ckpt = None
    end = total_updates if max_updates is None else min(total_updates, start + max_updates)
    for update in range(start, end):
        gen = torch.Generator().manual_seed(_derive_seed(seed, update, 0, 2))
        buf = collect_rollouts(tasks, nets, T, episode_seeds(seed, update, ppo.n_envs), gen)
        report = ppo_update(nets, buf, ppo, optimizers, gen)
        record = {
            "update": update + 1,
            "env_steps": (update + 1) * steps_per_update,
            "mean_episode_hi_return": float(np.mean(buf.episode_hi_returns)),
            "mean_episode_lo_return": float(np.mean(buf.episode_lo_returns)),
            "mean_alpha": float(buf.alphas.mean()),
            "mean_beta": float(buf.betas.mean()),
            **{k: float(v) for k, v in asdict(report).items()},
        }
        records.append(record)
        with open(metrics_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        if progress is not None:
            progress(record)
        log.info("update %d/%d hi_return=%.3f lo_return=%.3f", update + 1, total_updates,
                 record["mean_episode_hi_return"], record["mean_episode_lo_return"])
        if (update + 1) % setup.checkpoint_every == 0 or update + 1 == end:
            last_ckpt = out / f"checkpoint_{update + 1:06d}.ckpt"
            opt_tensors, opt_steps = _optimizer_tensors(optimizers)
            meta = {
                "update": update + 1,
                "env_steps": (update + 1) * steps_per_update,
                "seed": int(seed),
                "optimizer_steps": opt_steps,
                "setup": setup_to_dict(setup),
            }
            save_checkpoint(last_ckpt, nets, meta, opt_tensors)
    return {"checkpoint": last_ckpt, "records": records, "nets": nets, "total_updates": total_updates}
