"""Run configuration: one declarative file drives every command.

The file is validated twice: structurally against the JSON schema shipped
with the package, then semantically (epsilon grid rule, surrogate ids
against the registry, target entries) before any work starts. CLI flags
may override scalar fields only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .engine import AttackBudget, OptimizerConfig
from .errors import ConfigError
from .surrogates.registry import Registry


def parse_number(value, where: str) -> float:
    """Accept plain numbers or exact fraction strings like '16/255'."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        parts = value.split("/")
        try:
            if len(parts) == 1:
                return float(parts[0])
            if len(parts) == 2:
                return float(parts[0]) / float(parts[1])
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{where}: expected a number or 'a/b' fraction, got {value!r}")


def _schema() -> dict:
    with resources.files("vlmattack.data").joinpath("config.schema.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    registry: Registry | None
    budget: AttackBudget | None
    optimizer: OptimizerConfig | None
    objective_spec: dict | None
    data: dict | None
    output_dir: Path | None
    evaluation: dict | None

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def resolve(self, relpath) -> Path:
        p = Path(relpath)
        return p if p.is_absolute() else self.base_dir / p


def _apply_overrides(doc: dict, overrides: dict) -> None:
    """Overrides touch scalar leaves only (seed, iterations, n, ...)."""
    paths = {
        "seed": ("data", "seed"),
        "n": ("data", "n"),
        "iterations": ("attack", "budget", "iterations"),
        "epsilon": ("attack", "budget", "epsilon"),
        "step_size": ("attack", "budget", "step_size"),
        "rng_seed": ("attack", "optimizer", "rng_seed"),
        "output": ("output", "directory"),
        "store": ("evaluation", "store"),
    }
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in paths:
            raise ConfigError(f"unknown override {key!r}")
        node = doc
        *parents, leaf = paths[key]
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value


def load_run_config(path, overrides: dict | None = None, require=()) -> RunConfig:
    """Parse + validate a config file; `require` names mandatory sections."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _apply_overrides(doc, overrides or {})

    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc

    base_dir = path.parent.resolve()
    for section in require:
        if section not in doc:
            raise ConfigError(f"{section}: section is required for this command")

    registry = None
    if "registry" in doc:
        reg_path = (base_dir / doc["registry"]) if not Path(doc["registry"]).is_absolute() else Path(doc["registry"])
        if not reg_path.is_file():
            raise ConfigError(f"registry: file {reg_path} does not exist")
        registry = Registry.from_file(reg_path)

    budget = optimizer = None
    objective_spec = None
    attack = doc.get("attack")
    if attack:
        # defaults mirror the reference evaluation setup: epsilon 16/255,
        # 500 iterations, step epsilon/15
        b = dict(attack.get("budget") or {})
        epsilon = parse_number(b.get("epsilon", "16/255"), "attack.budget.epsilon")
        if "step_size" in b:
            step_size = parse_number(b["step_size"], "attack.budget.step_size")
        else:
            step_size = epsilon / 15
        budget = AttackBudget(
            epsilon=epsilon,
            iterations=int(b.get("iterations", 500)),
            step_size=step_size,
        ).validate()
        o = dict(attack.get("optimizer") or {})
        for key in ("spectrum_sigma", "inner_step_size"):
            if key in o:
                o[key] = parse_number(o[key], f"attack.optimizer.{key}")
        optimizer = OptimizerConfig(**o).validate()
        objective_spec = dict(attack["objective"])
        if registry is None:
            raise ConfigError("registry: required when an attack section is present")
        for sid in objective_spec["surrogates"]:
            if sid not in registry:
                raise ConfigError(
                    f"attack.objective.surrogates: unknown surrogate id {sid!r}; "
                    f"registry knows: {', '.join(registry.ids())}"
                )
        if objective_spec["kind"] == "targeted_caption" and not (
            objective_spec.get("target_text") or objective_spec.get("target_texts")
        ):
            raise ConfigError(
                "attack.objective.target_text: required for targeted_caption "
                "(the target sentence is an input, not a policy)"
            )

    evaluation = doc.get("evaluation")
    if evaluation:
        seen = set()
        for i, t in enumerate(evaluation.get("targets", [])):
            if t["id"] in seen:
                raise ConfigError(f"evaluation.targets[{i}].id: duplicate id {t['id']!r}")
            seen.add(t["id"])
            if t["type"] == "http" and not t.get("credential_env"):
                raise ConfigError(
                    f"evaluation.targets[{i}].credential_env: required for http targets"
                )

    output_dir = None
    if doc.get("output"):
        output_dir = Path(doc["output"]["directory"])
        if not output_dir.is_absolute():
            output_dir = base_dir / output_dir

    return RunConfig(
        raw=doc,
        base_dir=base_dir,
        registry=registry,
        budget=budget,
        optimizer=optimizer,
        objective_spec=objective_spec,
        data=doc.get("data"),
        output_dir=output_dir,
        evaluation=evaluation,
    )
