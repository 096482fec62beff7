"""Run configuration dataclasses, YAML loading and dot-path overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .sleeping import BanditConfig

CURATOR_KINDS = (
    "tabular_osmd",
    "approx_surrogate",
    "approx_clipped",
    "uniform",
    "sec",
    "pcl",
    "regression",
    "abs_adv",
)
OUTPUT_ENV = "ACTOR_CURATOR_OUT"


@dataclass
class BankConfig:
    size: int = 500
    answer_count: int = 4
    structure: str = "prerequisite"
    difficulty_law: str = "uniform"
    n_buckets: int = 5
    gate: float = 0.6
    # None derives the bank seed from the master seed
    seed: int | None = None
    path: str | None = None


@dataclass
class ActorConfig:
    skill: float = 2.0
    learning_rate: float = 2.0
    update_rule: str = "reinforce_mean_baseline"
    clip_range: tuple[float, float] | None = None
    baseline: str = "group"


@dataclass
class CuratorConfig:
    kind: str = "tabular_osmd"
    eta: float = 1.0
    alpha: float | None = None
    cap: float = 30.0
    clip: tuple[float, float] = (0.8, 1.2)
    optimizer_lr: float = 0.05
    epochs_per_step: int = 20
    kl_mode: str = "conditional"
    # approx curators sample from their conditional floored at conditional_floor / k
    conditional_floor: float = 0.0
    sec_td_rate: float = 0.5
    sec_temperature: float = 0.1
    pcl_target: float = 0.5
    pcl_lr: float = 0.1
    pcl_epochs: int = 5
    regression_lr: float = 0.1
    regression_epochs: int = 5


@dataclass
class RunConfig:
    bank: BankConfig = field(default_factory=BankConfig)
    actor: ActorConfig = field(default_factory=ActorConfig)
    curator: CuratorConfig = field(default_factory=CuratorConfig)
    candidate_batch: int = 64
    training_batch: int = 16
    rollouts_per_problem: int = 8
    total_steps: int = 200
    dormant_steps: int = 0
    warmup_steps: int = 0
    sampling_prior: bool = False
    # "two_stage" proposes candidates first; "single_stage" curates the whole bank
    estimator: str = "two_stage"
    # "iid" draws with replacement then deduplicates; "without_replacement" draws distinct ids
    selection: str = "iid"
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str | None = None
    record_feedback: bool = True

    def validate(self, bank_size: int | None = None) -> None:
        n = self.bank.size if bank_size is None else bank_size
        if self.curator.kind not in CURATOR_KINDS:
            raise ConfigurationError(f"unknown curator kind {self.curator.kind!r}")
        if self.estimator not in ("two_stage", "single_stage"):
            raise ConfigurationError("estimator must be 'two_stage' or 'single_stage'")
        if self.selection not in ("iid", "without_replacement"):
            raise ConfigurationError("selection must be 'iid' or 'without_replacement'")
        k = n if self.estimator == "single_stage" else self.candidate_batch
        if not 1 <= self.training_batch <= k <= n:
            raise ConfigurationError("need 1 <= training_batch <= candidate_batch <= bank size")
        if self.rollouts_per_problem < 1:
            raise ConfigurationError("rollouts_per_problem must be >= 1")
        if self.total_steps < 1:
            raise ConfigurationError("total_steps must be >= 1")
        if self.dormant_steps < 0 or self.warmup_steps < 0:
            raise ConfigurationError("dormant_steps and warmup_steps must be nonnegative")
        if self.dormant_steps + self.warmup_steps > self.total_steps:
            raise ConfigurationError("dormant_steps + warmup_steps must not exceed total_steps")
        if self.curator.eta < 0:
            raise ConfigurationError("curator eta must be nonnegative")

    @property
    def effective_candidates(self) -> int:
        return self.bank.size if self.estimator == "single_stage" else self.candidate_batch


# -- dict / yaml plumbing ---------------------------------------------------

def _build(cls, data: dict | None):
    data = dict(data or {})
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value)
        elif name in ("clip", "clip_range") and value is not None:
            kwargs[name] = tuple(float(v) for v in value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_NESTED = {
    (RunConfig, "bank"): BankConfig,
    (RunConfig, "actor"): ActorConfig,
    (RunConfig, "curator"): CuratorConfig,
}


def config_from_dict(data: dict) -> RunConfig:
    try:
        return _build(RunConfig, data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def config_to_dict(config) -> dict:
    d = dataclasses.asdict(config)
    return _listify(d)


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def bandit_from_dict(data: dict) -> BanditConfig:
    try:
        return _build(BanditConfig, data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_yaml(path: str | Path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must hold a mapping at top level")
    return data


def apply_overrides(data: dict, overrides: list[str] | None) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars or lists."""
    out = _listify(dict(data))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        set_path(out, key.strip(), yaml.safe_load(raw))
    return out


def set_path(data: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigurationError(f"cannot descend into {part!r} of {dotted!r}")
        node = nxt
    node[parts[-1]] = value


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))
