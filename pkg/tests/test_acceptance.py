"""Acceptance criteria, one summary line each.

Each test asserts its criterion at the stated tolerance and also records a
PASS/FAIL line that pytest prints in an "acceptance criteria" section.
"""
import statistics
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from tihdp.harness.cli import main
from tihdp.harness.config import default_config
from tihdp.harness.evaluate import evaluate_checkpoint, evaluate_scripted, log_path, mean_hi_return
from tihdp.harness.oracles import gae_oracle, gradient_check, physics_thresholds, priority_oracle
from tihdp.harness.trajlog import read_log
from tihdp.priority import PriorityLayer, PriorityVector, update_priorities
from tihdp.trainer import PpoConfig, TrainSetup, initial_nets, train
from tihdp.world import ScenarioConfig


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def test_priority_oracle_suite(acceptance_line):
    (ok, detail), secs = timed(priority_oracle, 10_000, 0, 1e-12)
    passed = ok and secs < 10.0
    acceptance_line("priority oracle (10k cases, 1e-12, <10 s)", passed, f"{detail}, {secs:.2f}s")
    assert passed, detail


def test_worked_priority_examples(acceptance_line):
    zero4 = np.zeros(4)
    cases = [
        (PriorityVector(np.full(4, 0.25), 0.1), [1, -1, 0, 0], 0, zero4, [0.3611, 0.1389, 0.25, 0.25], np.zeros(4, bool)),
        (PriorityVector(np.full(4, 0.25), 0.1), zero4, 1, [0, 2, 0, 0], [0.2045, 0.3864, 0.2045, 0.2045], np.zeros(4, bool)),
        (PriorityVector(np.array([0.4, 0.2, 0.2, 0.2]), 0.1), zero4, 0, zero4, [0, 1 / 3, 1 / 3, 1 / 3],
         np.array([True, False, False, False])),
    ]
    worst = 0.0
    for pv, c_bar, sigma, sums, expected, completed in cases:
        out = update_priorities(pv, c_bar, sigma, sums, completed)
        worst = max(worst, float(np.max(np.abs(out.phi - expected))))
    passed = worst <= 1e-4
    acceptance_line("worked priority examples (1e-4)", passed, f"max deviation {worst:.1e}")
    assert passed


def test_physics_thresholds(acceptance_line):
    (ok, detail), secs = timed(physics_thresholds, 1e-9)
    passed = ok and secs < 5.0
    acceptance_line("physics thresholds (<5 s)", passed, f"{detail}, {secs:.2f}s")
    assert passed, detail


def test_gradient_checks(acceptance_line):
    (ok, detail), secs = timed(gradient_check, 5, 2, 1e-4)
    passed = ok and secs < 60.0
    acceptance_line("gradient checks (5 configs, 1e-4, <60 s)", passed, f"{detail}, {secs:.2f}s")
    assert passed, detail


def test_gae_oracle(acceptance_line):
    ok, detail = gae_oracle(100, 1, 1e-10)
    acceptance_line("GAE oracle (100 sequences, 1e-10)", ok, detail)
    assert ok, detail


def test_environment_solvability(acceptance_line):
    report, secs = timed(evaluate_scripted, ScenarioConfig(), 32, 0)
    passed = report.cor >= 0.5 and secs < 300.0
    acceptance_line("scripted COR >= 0.5 on 2L/1M/1H N=3 (32 episodes, <5 min)", passed,
                    f"COR {report.cor:.3f}, TOCR {report.tocr:.3f}, {secs:.1f}s")
    assert passed


# the initial policy scores close to zero, so ratios are taken against at
# least this much return; a ratio against 0.05 would be meaningless noise
SMOKE_RETURN_FLOOR = 0.1
SMOKE_EPISODES = 64
SMOKE_EVAL_SEED = 5000


def smoke_setup():
    return TrainSetup(
        scenario=ScenarioConfig(n_robots=1, n_light=1, n_medium=0, n_heavy=0),
        ppo=PpoConfig(n_envs=8, total_steps=256_000),
        hidden=(64, 64),
        checkpoint_every=20,
    )


def test_training_smoke(acceptance_line, tmp_path):
    setup = smoke_setup()
    ratios, details, slowest = [], [], 0.0
    for seed in range(3):
        before = mean_hi_return(initial_nets(setup, seed), setup.scenario, SMOKE_EPISODES, SMOKE_EVAL_SEED, setup.k_phi)
        result, secs = timed(train, setup, seed, tmp_path / f"seed{seed}")
        after = mean_hi_return(result["nets"], setup.scenario, SMOKE_EPISODES, SMOKE_EVAL_SEED, setup.k_phi)
        ratios.append(after / max(before, SMOKE_RETURN_FLOOR))
        slowest = max(slowest, secs)
        details.append(f"seed {seed}: {before:.3f} -> {after:.3f} in {secs / 60:.1f} min")
    median = statistics.median(ratios)
    passed = median >= 3.0 and slowest <= 20 * 60
    acceptance_line("training smoke (median of 3 seeds >= 3x, <=20 min each)", passed,
                    f"median ratio {median:.1f}; " + "; ".join(details))
    assert passed


def test_adaptability(acceptance_line, tmp_path):
    base = ScenarioConfig()
    ppo = PpoConfig(n_envs=4, total_steps=1600)
    ckpts = {}
    for variant in ("tihdp-with-com", "two-layered-global"):
        ckpts[variant] = train(TrainSetup(scenario=base, ppo=ppo, variant=variant), 0, tmp_path / variant)["checkpoint"]
    targets = {
        "3L/2M/1H N=4": ScenarioConfig(n_robots=4, n_light=3, n_medium=2, n_heavy=1),
        "1L/1M/1H N=2": ScenarioConfig(n_robots=2, n_light=1, n_medium=1, n_heavy=1),
    }
    notes, passed = [], True
    for name, sc in targets.items():
        log_dir = tmp_path / "logs" / name.replace("/", "").replace(" ", "_")
        rep = evaluate_checkpoint(ckpts["tihdp-with-com"], sc, 2, 0, log_dir)
        header, steps, truncated = read_log(log_path(log_dir, 0))
        logs_ok = (
            not truncated and len(steps) == sc.episode_length
            and len(steps[-1]["robots"]) == sc.n_robots and len(steps[-1]["objects"]) == sc.n_objects
            and all(len(r["priority"]) == sc.n_objects for r in steps[-1]["robots"])
        )
        rejected = not evaluate_checkpoint(ckpts["two-layered-global"], sc, 2, 0).applicable
        ok = rep.applicable and logs_ok and rejected
        passed &= ok
        notes.append(f"{name}: tihdp COR {rep.cell('cor')}, logs {'ok' if logs_ok else 'bad'}, "
                     f"global {'-' if rejected else 'ran'}")
    home = evaluate_checkpoint(ckpts["two-layered-global"], base, 1, 0)
    passed &= home.applicable
    acceptance_line("adaptability across N and M", passed, "; ".join(notes))
    assert passed


def test_communication_reach(acceptance_line):
    # robot 0 starts committed to object 0 and only sees objects 0 and 1;
    # robots 1 and 2 keep requesting object 3
    layer = PriorityLayer(3, 4, k_phi=0.1)
    layer.vectors[0] = PriorityVector(np.array([1.0, 0.0, 0.0, 0.0]), 0.1, 0)
    layer.targets[0] = 0
    for j in (1, 2):
        layer.vectors[j] = PriorityVector(np.array([0.0, 0.0, 0.0, 1.0]), 0.1, j)
        layer.targets[j] = 3
    reached = None
    for t in range(1, 41):
        layer.advance([[1, 1], [1, 1], [1, 1]], [[0, 1], [3, 2], [3, 2]],
                      alphas=[0, 1, 1], betas=[1, 0, 0], completed=np.zeros(4, bool))
        if layer.targets[0] == 3:
            reached = t
            break
    passed = reached is not None
    acceptance_line("communication reach (<=40 steps, k_phi 0.1)", passed,
                    f"object outside the neighbor set became the target at step {reached}")
    assert passed


def _pipeline(root: Path) -> dict:
    root.mkdir(parents=True)
    cfg = root / "config.yaml"
    cfg.write_text(yaml.safe_dump(default_config(), sort_keys=False))
    assert main(["train", "--config", str(cfg), "--seed", "0", "--out", str(root / "run"), "--quiet"]) == 0
    ckpt = sorted((root / "run").glob("checkpoint_*.ckpt"))[-1]
    assert main(["eval", "--checkpoint", str(ckpt), "--episodes", "4", "--report", str(root / "report.json"),
                 "--log-dir", str(root / "logs")]) == 0
    log = sorted((root / "logs").rglob("*.jsonl"))[0]
    assert main(["replay", str(log), "--out", str(root / "svg")]) == 0
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_determinism(acceptance_line, tmp_path, capsys):
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    capsys.readouterr()
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    passed = not differing and len(a) > 5
    acceptance_line("determinism: train(50k) -> eval -> replay byte-identical", passed,
                    f"{len(a)} files compared" + (f", differing: {differing}" if differing else ""))
    assert passed


def test_directional_ordering_not_run(acceptance_line):
    acceptance_line("soft directional COR ordering after 8 h/variant", None,
                    "reported, not gated; needs 3 variants x 3 seeds x 8 CPU hours")
    pytest.skip("8-hour-per-variant training budget is outside the test run")
