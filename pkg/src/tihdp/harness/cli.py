"""Command-line entry point: ``tihdp <subcommand>``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
from pathlib import Path

from ..nets import load_checkpoint, read_checkpoint
from ..obs import ObsConfig, describe_layout
from ..world import ScenarioConfig
from .config import ConfigError, default_config, dump_config, load_config
from .evaluate import evaluate_nets, evaluate_scripted, obs_config_from_tag
from .metrics import format_table
from .oracles import SUITES, run_all
from .render import render_log

SCENARIO_RE = re.compile(r"^(\d+)L/(\d+)M/(\d+)H(?::N=(\d+))?$")
DEFAULT_EPISODES = 128
DEFAULT_SEED_BASE = 10_000


def parse_scenario(text: str, base: ScenarioConfig) -> ScenarioConfig:
    """``"2L/1M/1H:N=3"`` -> scenario with those counts; other fields from ``base``."""
    m = SCENARIO_RE.match(text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"scenario must look like 2L/1M/1H:N=3, got {text!r}")
    light, medium, heavy, n = m.groups()
    return dataclasses.replace(
        base, n_light=int(light), n_medium=int(medium), n_heavy=int(heavy),
        n_robots=int(n) if n else base.n_robots,
    )


def scenario_slug(s: ScenarioConfig) -> str:
    return f"{s.n_light}L{s.n_medium}M{s.n_heavy}H_N{s.n_robots}"


def _config_or_exit(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        raise SystemExit(2)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        raise SystemExit(2)


def cmd_init_config(args) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        print(f"error: {path} exists (use --force to overwrite)", file=sys.stderr)
        return 1
    dump_config(default_config(), path)
    print(path)
    return 0


def cmd_train(args) -> int:
    from ..trainer import setup_to_dict, train

    setup, eval_cfg = _config_or_exit(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = setup_to_dict(setup)
    snapshot = {
        "scenario": resolved["scenario"],
        "obs": resolved["obs"],
        "trainer": resolved["ppo"],
        "policy": {k: resolved[k] for k in ("variant", "hidden", "head_gain", "k_phi", "checkpoint_every")},
        "eval": eval_cfg,
    }
    dump_config(snapshot, out / "config.resolved.yaml")

    def progress(rec):
        if not args.quiet:
            print(f"update {rec['update']:>5}  steps {rec['env_steps']:>9}  "
                  f"hi_return {rec['mean_episode_hi_return']:9.3f}  lo_return {rec['mean_episode_lo_return']:9.3f}",
                  flush=True)

    result = train(setup, args.seed, out, resume_from=args.resume, max_updates=args.max_updates, progress=progress)
    print(f"checkpoint: {result['checkpoint']}")
    return 0


def cmd_eval(args) -> int:
    episodes, seed_base = DEFAULT_EPISODES, DEFAULT_SEED_BASE
    base = ScenarioConfig()
    nets = k_phi = None
    if args.config:
        setup, eval_cfg = _config_or_exit(args.config)
        base = setup.scenario
        episodes, seed_base = eval_cfg["episodes"], eval_cfg["seed_base"]
    if args.checkpoint:
        nets, manifest, _ = load_checkpoint(args.checkpoint)
        saved = manifest.get("meta", {}).get("setup", {})
        k_phi = saved.get("k_phi", 0.1)
        if not args.config and "scenario" in saved:
            sc = dict(saved["scenario"])
            sc["masses"] = tuple(sc["masses"])
            base = ScenarioConfig(**sc)
    elif not args.scripted:
        print("error: give --checkpoint or --scripted", file=sys.stderr)
        return 2
    episodes = args.episodes if args.episodes is not None else episodes
    seed_base = args.seed_base if args.seed_base is not None else seed_base
    try:
        scenarios = [parse_scenario(s, base) for s in args.scenario] or [base]
    except (argparse.ArgumentTypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    reports = []
    for sc in scenarios:
        log_dir = Path(args.log_dir) / scenario_slug(sc) if args.log_dir else None
        if args.scripted:
            rep = evaluate_scripted(sc, episodes, seed_base, log_dir)
        else:
            rep = evaluate_nets(nets, sc, episodes, seed_base, k_phi, log_dir)
        reports.append(rep)
        if not rep.applicable:
            print(f"not applicable: {rep.reason}", file=sys.stderr)
    print(format_table(reports))
    if args.report:
        doc = {"rows": [r.to_dict() for r in reports]}
        Path(args.report).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_replay(args) -> int:
    paths = render_log(args.log, args.out, windows=args.windows)
    for p in paths:
        print(p)
    return 0


def cmd_describe_layout(args) -> int:
    if args.checkpoint:
        manifest, _ = read_checkpoint(args.checkpoint)
        layout = manifest["layout"]
        obs_cfg = obs_config_from_tag(layout["obs_tag"])
        n, m = layout["n_robots"], layout["n_objects"]
    elif args.config:
        setup, _ = _config_or_exit(args.config)
        obs_cfg, n, m = setup.obs, setup.scenario.n_robots, setup.scenario.n_objects
    else:
        obs_cfg = ObsConfig(J=args.J, K=args.K)
        n, m = args.n_robots, args.n_objects
    print(json.dumps(describe_layout(obs_cfg, n, m), indent=2))
    return 0


def cmd_oracle_check(args) -> int:
    results = run_all(args.suite or None)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tihdp", description="Hierarchical multi-robot transport: train, evaluate, replay.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init-config", help="write a config file with every default spelled out")
    s.add_argument("path")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_init_config)

    s = sub.add_parser("train", help="train a policy")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory for checkpoints and metrics")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--max-updates", type=int, help="stop after this many updates in this invocation")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="greedy evaluation; prints COR/TOCR per scenario")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--scripted", action="store_true", help="evaluate the hand-written controller")
    s.add_argument("--config", help="base scenario and eval settings")
    s.add_argument("--scenario", action="append", default=[], help="e.g. 2L/1M/1H:N=3 (repeatable)")
    s.add_argument("--episodes", type=int)
    s.add_argument("--seed-base", type=int)
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--log-dir", help="write one trajectory log per episode here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("replay", help="render a trajectory log to SVG")
    s.add_argument("log")
    s.add_argument("--out", required=True)
    s.add_argument("--windows", type=int, default=4)
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("describe-layout", help="print observation field offsets as JSON")
    s.add_argument("--checkpoint")
    s.add_argument("--config")
    s.add_argument("--J", type=int, default=2)
    s.add_argument("--K", type=int, default=2)
    s.add_argument("--n-robots", type=int, default=3)
    s.add_argument("--n-objects", type=int, default=4)
    s.set_defaults(func=cmd_describe_layout)

    s = sub.add_parser("oracle-check", help="run the reference-computation self-checks")
    s.add_argument("--suite", action="append", choices=sorted(SUITES))
    s.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
