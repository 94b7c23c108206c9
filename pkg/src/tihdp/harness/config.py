"""Run configuration: one nested YAML document, validated field by field."""
from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from ..nets import VARIANTS
from ..obs import ObsConfig
from ..trainer import PpoConfig, TrainSetup
from ..world import ScenarioConfig


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


SECTIONS = {
    "scenario": ScenarioConfig,
    "obs": ObsConfig,
    "trainer": PpoConfig,
}

# keys of the "policy" section and their types
POLICY_KEYS = {
    "variant": str,
    "hidden": list,
    "head_gain": float,
    "k_phi": float,
    "checkpoint_every": int,
}
EVAL_KEYS = {"episodes": int, "seed_base": int}


def default_config() -> dict:
    setup = TrainSetup()
    scenario = dataclasses.asdict(setup.scenario)
    scenario["masses"] = list(scenario["masses"])
    return {
        "scenario": scenario,
        "obs": dataclasses.asdict(setup.obs),
        "trainer": dataclasses.asdict(setup.ppo),
        "policy": {
            "variant": setup.variant,
            "hidden": list(setup.hidden),
            "head_gain": setup.head_gain,
            "k_phi": setup.k_phi,
            "checkpoint_every": setup.checkpoint_every,
        },
        "eval": {"episodes": 128, "seed_base": 10_000},
    }


def _check_type(path: str, value, expected, problems: list) -> None:
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected in (list, tuple):
        ok = isinstance(value, (list, tuple))
    else:
        ok = isinstance(value, expected)
    if not ok:
        problems.append(f"{path}: expected {expected.__name__}, got {type(value).__name__} ({value!r})")


def _section_fields(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        t = f.type if isinstance(f.type, type) else {"int": int, "float": float, "tuple": tuple, "str": str}.get(f.type, object)
        out[f.name] = t
    return out


def validate(doc) -> list:
    """Every problem found in ``doc``; an empty list means it is valid."""
    problems = []
    if not isinstance(doc, dict):
        return ["top level: expected a mapping"]
    expected = {name: _section_fields(cls) for name, cls in SECTIONS.items()}
    expected["policy"] = POLICY_KEYS
    expected["eval"] = EVAL_KEYS
    for section, keys in expected.items():
        if section not in doc:
            problems.append(f"{section}: missing section")
            continue
        body = doc[section]
        if not isinstance(body, dict):
            problems.append(f"{section}: expected a mapping")
            continue
        for key, typ in keys.items():
            if key not in body:
                problems.append(f"{section}.{key}: missing key")
            else:
                _check_type(f"{section}.{key}", body[key], typ, problems)
        for key in body:
            if key not in keys:
                problems.append(f"{section}.{key}: unknown key")
    for section in doc:
        if section not in expected:
            problems.append(f"{section}: unknown section")
    policy = doc.get("policy") if isinstance(doc.get("policy"), dict) else {}
    if "variant" in policy and policy["variant"] not in VARIANTS:
        problems.append(f"policy.variant: must be one of {list(VARIANTS)}, got {policy['variant']!r}")
    return problems


def setup_from_dict(doc: dict) -> tuple:
    """Build ``(TrainSetup, eval settings)``; raises ConfigError with every problem."""
    problems = validate(doc)
    if problems:
        raise ConfigError(problems)
    try:
        scenario = dict(doc["scenario"])
        scenario["masses"] = tuple(scenario["masses"])
        setup = TrainSetup(
            scenario=ScenarioConfig(**scenario),
            obs=ObsConfig(**doc["obs"]),
            ppo=PpoConfig(**doc["trainer"]),
            variant=doc["policy"]["variant"],
            hidden=tuple(int(h) for h in doc["policy"]["hidden"]),
            head_gain=float(doc["policy"]["head_gain"]),
            k_phi=float(doc["policy"]["k_phi"]),
            checkpoint_every=int(doc["policy"]["checkpoint_every"]),
        )
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    return setup, dict(doc["eval"])


def load_config(path) -> tuple:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"YAML parse error: {exc}"]) from exc
    return setup_from_dict(doc)


def dump_config(doc: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))
