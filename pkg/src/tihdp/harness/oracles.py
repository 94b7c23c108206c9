"""Self-checks against independent reference computations.

Each suite returns an ``OracleResult``; ``run_all`` powers the
``oracle-check`` command and the acceptance tests reuse the suites directly.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import torch

from ..nets import ActionDistribution, NetLayout, init_params
from ..priority import PriorityVector, update_priorities
from ..trainer import compute_gae
from ..world import ScenarioConfig, WeightClass, reset, step


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name, fn, *args, **kwargs) -> OracleResult:
    t0 = time.perf_counter()
    passed, detail = fn(*args, **kwargs)
    return OracleResult(name, bool(passed), detail, time.perf_counter() - t0)


# -- priority update -------------------------------------------------------------


def reference_priority_update(phi, k, c_bar, sigma, sums, completed) -> list:
    """Straight-line scalar re-evaluation: update, zero completed, clamp, normalize."""
    raw = []
    for l in range(len(phi)):
        if completed[l]:
            v = 0.0
        else:
            v = (1.0 - k) * phi[l] + k * (c_bar[l] + sigma * sums[l])
        raw.append(v if v > 0.0 else 0.0)
    total = 0.0
    for v in raw:
        total += v
    if total <= 0.0:
        return [0.0] * len(raw)
    return [v / total for v in raw]


def random_priority_case(rng: np.random.Generator) -> dict:
    m = int(rng.integers(1, 9))
    n = int(rng.integers(1, 7))
    phi = rng.random(m) * (rng.random(m) > 0.2)
    phi = phi / phi.sum() if phi.sum() > 0 else np.full(m, 1.0 / m)
    return {
        "phi": phi,
        "k": float(rng.choice([0.1, rng.uniform(0.01, 1.0)])),
        "c_bar": rng.integers(-1, 2, size=m),
        "sigma": int(rng.integers(0, 2)),
        "sums": rng.integers(0, n + 1, size=m),
        "completed": rng.random(m) < 0.25,
    }


def priority_oracle(cases: int = 10_000, seed: int = 0, tol: float = 1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(cases):
        c = random_priority_case(rng)
        got = update_priorities(PriorityVector(c["phi"], c["k"]), c["c_bar"], c["sigma"], c["sums"], c["completed"]).phi
        ref = reference_priority_update(list(c["phi"]), c["k"], list(c["c_bar"]), c["sigma"], list(c["sums"]), list(c["completed"]))
        err = float(np.max(np.abs(got - np.asarray(ref))))
        worst = max(worst, err)
        total = float(got.sum())
        if err > tol:
            return False, f"case {n}: max error {err:.3e}"
        if np.any(got < 0.0) or np.any(got[c["completed"]] != 0.0):
            return False, f"case {n}: negative or non-zero completed entry"
        if not (abs(total - 1.0) <= 1e-9 or total == 0.0):
            return False, f"case {n}: sum {total!r}"
    return True, f"{cases} cases, max error {worst:.1e}"


# -- advantages --------------------------------------------------------------


def brute_force_gae(rewards, values, dones, gamma: float, lam: float, bootstrap: float = 0.0) -> np.ndarray:
    """Advantage as an explicit double sum of discounted TD errors, O(T^2)."""
    T = len(rewards)
    nxt = list(values[1:]) + [bootstrap]
    delta = [rewards[t] + gamma * nxt[t] * (1.0 - dones[t]) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total, weight = 0.0, 1.0
        for u in range(t, T):
            total += weight * delta[u]
            if dones[u]:
                break
            weight *= gamma * lam
        adv[t] = total
    return adv


def gae_oracle(sequences: int = 100, seed: int = 1, tol: float = 1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(sequences):
        T = int(rng.integers(1, 33))
        r, v = rng.normal(size=T), rng.normal(size=T)
        d = (rng.random(T) < 0.1).astype(float)
        gamma, lam = float(rng.uniform(0.5, 1.0)), float(rng.uniform(0.0, 1.0))
        boot = float(rng.normal())
        adv, ret = compute_gae(r, v, d, gamma, lam, boot)
        ref = brute_force_gae(r, v, d, gamma, lam, boot)
        err = float(np.max(np.abs(adv - ref)))
        worst = max(worst, err)
        if err > tol or np.max(np.abs(ret - (ref + v))) > tol:
            return False, f"sequence {n}: max error {err:.3e}"
    return True, f"{sequences} sequences, max error {worst:.1e}"


# -- gradients ---------------------------------------------------------------------


def _fd_compare(module, loss_fn, rng, coords_per_tensor: int, h: float) -> float:
    """Worst relative error between autograd and central differences."""
    module.zero_grad()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    with torch.no_grad():
        for name, p in module.named_parameters():
            flat = p.view(-1)
            grad = p.grad.view(-1).clone()
            picks = rng.choice(flat.numel(), size=min(coords_per_tensor, flat.numel()), replace=False)
            for j in picks:
                old = flat[j].item()
                flat[j] = old + h
                up = loss_fn().item()
                flat[j] = old - h
                down = loss_fn().item()
                flat[j] = old
                fd = (up - down) / (2.0 * h)
                an = grad[j].item()
                scale = max(abs(an), abs(fd), 1e-6)
                worst = max(worst, abs(an - fd) / scale)
    return worst


def gradient_check(configs: int = 5, seed: int = 2, tol: float = 1e-4, coords_per_tensor: int = 20, h: float = 1e-5):
    rng = np.random.default_rng(seed)
    variants = ("tihdp-with-com", "tihdp-without-com", "two-layered-global", "two-layered-local")
    worst = {"hi_actor": 0.0, "lo_actor": 0.0, "hi_critic": 0.0, "lo_critic": 0.0}
    for n in range(configs):
        variant = variants[n % len(variants)]
        K = int(rng.integers(1, 4))
        hidden = (int(rng.integers(4, 17)), int(rng.integers(4, 17)))
        N, M = int(rng.integers(1, 4)), int(rng.integers(K, K + 3))
        layout = NetLayout(variant=variant, obs_tag="test", hi_obs_dim=int(rng.integers(5, 20)),
                           global_dim=int(rng.integers(5, 20)), n_robots=N, n_objects=M, K=K, hidden=hidden)
        nets = init_params(layout, int(rng.integers(1 << 31)), head_gain=1.0).double()
        gen = torch.Generator().manual_seed(n)
        B, T = 3, 4

        obs = torch.randn(T, B, layout.hi_obs_dim, generator=gen, dtype=torch.float64)
        h0 = torch.randn(B, layout.rnn_width, generator=gen, dtype=torch.float64) * 0.5
        c0 = torch.randn(B, layout.rnn_width, generator=gen, dtype=torch.float64) * 0.5
        starts = torch.zeros(T, B)
        starts[2, 0] = 1.0
        if layout.hi_kind == "bernoulli":
            act = torch.randint(0, 2, (T, B, layout.hi_outputs), generator=gen)
            mask = None
        else:
            act = torch.randint(0, layout.hi_outputs, (T, B), generator=gen)
            mask = torch.ones(T, B, layout.hi_outputs, dtype=torch.bool)

        def hi_loss():
            logits, _ = nets.hi_actor.forward_sequence(obs, (h0, c0), starts)
            dist = ActionDistribution(layout.hi_kind, logits, mask)
            return dist.log_prob(act).sum() + 0.1 * dist.entropy().sum()

        lo_obs = torch.randn(B, layout.low_obs_dim, generator=gen, dtype=torch.float64)
        lo_act = torch.randint(0, 3, (B, 2), generator=gen)

        def lo_loss():
            dist = ActionDistribution("pair", nets.lo_actor(lo_obs))
            return dist.log_prob(lo_act).sum() + 0.1 * dist.entropy().sum()

        g = torch.randn(B, layout.global_dim, generator=gen, dtype=torch.float64)
        gl = torch.randn(B, layout.lo_critic_dim, generator=gen, dtype=torch.float64)

        checks = {
            "hi_actor": (nets.hi_actor, hi_loss),
            "lo_actor": (nets.lo_actor, lo_loss),
            "hi_critic": (nets.hi_critic, lambda: nets.hi_critic(g).sum()),
            "lo_critic": (nets.lo_critic, lambda: nets.lo_critic(gl).sum()),
        }
        for key, (module, fn) in checks.items():
            worst[key] = max(worst[key], _fd_compare(module, fn, rng, coords_per_tensor, h))
    passed = all(v <= tol for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return passed, f"{configs} configurations, worst relative error: {detail}"


# -- physics -----------------------------------------------------------------------


def head_on_push(weight: WeightClass, pushers: int, steps: int = 100) -> float:
    """Displacement of an object pushed straight ahead by ``pushers`` robots."""
    cfg = ScenarioConfig(
        n_robots=pushers,
        n_light=int(weight == WeightClass.LIGHT),
        n_medium=int(weight == WeightClass.MEDIUM),
        n_heavy=int(weight == WeightClass.HEAVY),
    )
    s = reset(cfg, 0)
    s.obj_pos[0] = (0.0, 0.0)
    s.obj_goal[0] = (50.0, 0.0)
    contact = cfg.body_radius + cfg.disc_radius
    # pushers sit 60 degrees apart on the contact circle, centered behind the object
    for i in range(pushers):
        a = (i - (pushers - 1) / 2) * math.pi / 3
        s.robot_pos[i] = (-contact * math.cos(a), contact * math.sin(a))
        s.robot_heading[i] = math.atan2(-s.robot_pos[i, 1], -s.robot_pos[i, 0])
    start = s.obj_pos[0].copy()
    for _ in range(steps):
        s = step(s, [(1, 0)] * pushers)
    return float(np.linalg.norm(s.obj_pos[0] - start))


PUSH_CASES = (
    (WeightClass.LIGHT, 1, True),
    (WeightClass.MEDIUM, 1, False),
    (WeightClass.MEDIUM, 2, True),
    (WeightClass.HEAVY, 1, False),
    (WeightClass.HEAVY, 2, False),
    (WeightClass.HEAVY, 3, False),
    (WeightClass.HEAVY, 4, False),
)


def physics_thresholds(tol: float = 1e-9):
    parts, ok = [], True
    for weight, k, moves in PUSH_CASES:
        d = head_on_push(weight, k)
        good = d > 0.1 if moves else d <= tol
        ok &= good
        parts.append(f"{weight.name.lower()}x{k}={d:.3g}m{'' if good else '!'}")
    return ok, ", ".join(parts)


SUITES = {
    "priority-oracle": priority_oracle,
    "gae-oracle": gae_oracle,
    "gradient-check": gradient_check,
    "physics-thresholds": physics_thresholds,
}


def run_all(names=None) -> list:
    return [_timed(n, SUITES[n]) for n in (names or SUITES)]
