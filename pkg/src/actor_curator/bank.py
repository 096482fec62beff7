"""Synthetic problem banks with controllable difficulty structure."""

from __future__ import annotations

import dataclasses
import functools
import graphlib
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateDistributionError

STRUCTURES = ("independent", "prerequisite", "bucketed")
DIFFICULTY_LAWS = ("uniform", "bimodal", "linear-ramp")
NOISE_DIMS = 4


@dataclass(frozen=True)
class BankSpec:
    size: int = 500
    answer_count: int = 4
    structure: str = "prerequisite"
    difficulty_law: str = "linear-ramp"
    seed: int | None = None
    n_buckets: int = 5
    gate: float = 0.6
    eval_weights: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.size < 1:
            raise ConfigurationError(f"bank size must be >= 1, got {self.size}")
        if self.answer_count < 2:
            raise ConfigurationError(f"answer_count must be >= 2, got {self.answer_count}")
        if self.structure not in STRUCTURES:
            raise ConfigurationError(f"unknown structure {self.structure!r}")
        if self.difficulty_law not in DIFFICULTY_LAWS:
            raise ConfigurationError(f"unknown difficulty_law {self.difficulty_law!r}")
        if self.n_buckets < 1:
            raise ConfigurationError("n_buckets must be >= 1")
        if not 0.0 <= self.gate <= 1.0:
            raise ConfigurationError("gate must lie in [0, 1]")
        if self.eval_weights is not None and len(self.eval_weights) != self.size:
            raise ConfigurationError("eval_weights length must equal size")


@dataclass(frozen=True)
class Problem:
    id: int
    difficulty: float
    features: tuple[float, ...]
    correct_answer: int
    eval_weight: float


@dataclass(frozen=True)
class ProblemBank:
    problems: tuple[Problem, ...]
    answer_count: int
    structure: str
    bucket_of: tuple[int, ...]
    n_buckets: int
    gate: float = 0.6
    # bucket -> buckets that must be passed first; only populated for "prerequisite"
    prerequisites: tuple[tuple[int, tuple[int, ...]], ...] = ()
    spec: BankSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.problems:
            raise ConfigurationError("a bank needs at least one problem")
        ids = [p.id for p in self.problems]
        if ids != list(range(len(ids))):
            raise ConfigurationError("problem ids must be 0..n-1 without gaps")
        widths = {len(p.features) for p in self.problems}
        if len(widths) != 1:
            raise ConfigurationError("all feature vectors must share one length")
        if any(not 0 <= p.correct_answer < self.answer_count for p in self.problems):
            raise ConfigurationError("correct_answer out of range")
        if len(self.bucket_of) != len(self.problems):
            raise ConfigurationError("bucket_of must cover every problem")
        if self.prerequisites:
            topological_buckets(self)

    def __len__(self) -> int:
        return len(self.problems)

    @functools.cached_property
    def difficulties(self) -> np.ndarray:
        return np.array([p.difficulty for p in self.problems])

    @functools.cached_property
    def features(self) -> np.ndarray:
        return np.array([p.features for p in self.problems], dtype=float)

    @functools.cached_property
    def correct_answers(self) -> np.ndarray:
        return np.array([p.correct_answer for p in self.problems], dtype=int)

    @functools.cached_property
    def buckets(self) -> np.ndarray:
        return np.asarray(self.bucket_of, dtype=int)

    @functools.cached_property
    def p_eval(self) -> np.ndarray:
        return eval_distribution(self)

    def prerequisite_map(self) -> dict[int, tuple[int, ...]]:
        return dict(self.prerequisites)

    def digest(self) -> str:
        return hashlib.sha256(dumps_bank(self).encode()).hexdigest()


def bucket_for(difficulty: float, n_buckets: int) -> int:
    """Equal-width difficulty bucket."""
    return min(int(difficulty * n_buckets), n_buckets - 1)


def _draw_difficulties(law: str, size: int, rng: np.random.Generator) -> np.ndarray:
    if law == "uniform":
        return rng.uniform(0.0, 1.0, size)
    if law == "bimodal":
        upper = rng.random(size) < 0.5
        return np.where(upper, rng.beta(6.0, 2.0, size), rng.beta(2.0, 6.0, size))
    if size == 1:
        return np.zeros(1)
    return np.arange(size) / (size - 1)


def generate_bank(spec: BankSpec) -> ProblemBank:
    """Build a bank deterministically from ``spec``.

    Features are laid out as ``[difficulty | one-hot bucket | 4 noise dims]``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    difficulty = _draw_difficulties(spec.difficulty_law, spec.size, rng)
    correct = rng.integers(0, spec.answer_count, spec.size)
    noise = rng.normal(0.0, 1.0, (spec.size, NOISE_DIMS))
    buckets = [bucket_for(float(d), spec.n_buckets) for d in difficulty]

    if spec.eval_weights is None:
        weights = np.full(spec.size, 1.0 / spec.size)
    else:
        raw = np.asarray(spec.eval_weights, dtype=float)
        weights = _normalize_weights(raw)

    problems = []
    for i in range(spec.size):
        onehot = [0.0] * spec.n_buckets
        onehot[buckets[i]] = 1.0
        feats = (float(difficulty[i]), *onehot, *(float(v) for v in noise[i]))
        problems.append(
            Problem(
                id=i,
                difficulty=float(difficulty[i]),
                features=feats,
                correct_answer=int(correct[i]),
                eval_weight=float(weights[i]),
            )
        )

    prereqs: tuple[tuple[int, tuple[int, ...]], ...] = ()
    if spec.structure == "prerequisite":
        prereqs = tuple((b, (b - 1,) if b > 0 else ()) for b in range(spec.n_buckets))

    return ProblemBank(
        problems=tuple(problems),
        answer_count=spec.answer_count,
        structure=spec.structure,
        bucket_of=tuple(buckets),
        n_buckets=spec.n_buckets,
        gate=spec.gate,
        prerequisites=prereqs,
        spec=spec,
    )


def _normalize_weights(raw: np.ndarray) -> np.ndarray:
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise DegenerateDistributionError("weights must be finite and nonnegative")
    total = raw.sum()
    if total <= 0:
        raise DegenerateDistributionError("weights sum to zero")
    return raw / total


def eval_distribution(bank: ProblemBank) -> np.ndarray:
    """Normalized evaluation weights p_X over the bank."""
    return _normalize_weights(np.array([p.eval_weight for p in bank.problems], dtype=float))


def topological_buckets(bank: ProblemBank) -> list[int]:
    """Order buckets so every prerequisite precedes its dependents."""
    sorter = graphlib.TopologicalSorter()
    for b in range(bank.n_buckets):
        sorter.add(b)
    for b, pre in bank.prerequisites:
        sorter.add(b, *pre)
    try:
        return list(sorter.static_order())
    except graphlib.CycleError as exc:
        raise ConfigurationError(f"prerequisite graph has a cycle: {exc.args[1]}") from None


# -- serialization ----------------------------------------------------------

def _header(bank: ProblemBank) -> dict:
    spec = dataclasses.asdict(bank.spec) if bank.spec is not None else None
    if spec is not None and spec["eval_weights"] is not None:
        spec["eval_weights"] = list(spec["eval_weights"])
    return {
        "header": {
            "spec": spec,
            "seed": bank.spec.seed if bank.spec is not None else None,
            "answer_count": bank.answer_count,
            "structure": bank.structure,
            "n_buckets": bank.n_buckets,
            "gate": bank.gate,
            "prerequisites": [[b, list(pre)] for b, pre in bank.prerequisites],
        }
    }


def dumps_bank(bank: ProblemBank) -> str:
    lines = [json.dumps(_header(bank), sort_keys=True)]
    for p, bucket in zip(bank.problems, bank.bucket_of):
        record = {
            "id": p.id,
            "difficulty": p.difficulty,
            "features": list(p.features),
            "correct_answer": p.correct_answer,
            "eval_weight": p.eval_weight,
            "bucket": bucket,
        }
        lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + "\n"


def loads_bank(text: str) -> ProblemBank:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError("empty bank file")
    head = json.loads(lines[0]).get("header")
    if head is None:
        raise ConfigurationError("bank file must start with a header record")
    problems, buckets = [], []
    for ln in lines[1:]:
        rec = json.loads(ln)
        problems.append(
            Problem(
                id=rec["id"],
                difficulty=rec["difficulty"],
                features=tuple(rec["features"]),
                correct_answer=rec["correct_answer"],
                eval_weight=rec["eval_weight"],
            )
        )
        buckets.append(rec["bucket"])
    spec = None
    if head.get("spec") is not None:
        raw = dict(head["spec"])
        if raw.get("eval_weights") is not None:
            raw["eval_weights"] = tuple(raw["eval_weights"])
        spec = BankSpec(**raw)
    return ProblemBank(
        problems=tuple(problems),
        answer_count=head["answer_count"],
        structure=head["structure"],
        bucket_of=tuple(buckets),
        n_buckets=head["n_buckets"],
        gate=head["gate"],
        prerequisites=tuple((b, tuple(pre)) for b, pre in head["prerequisites"]),
        spec=spec,
    )


def save_bank(bank: ProblemBank, path: str | Path) -> None:
    Path(path).write_text(dumps_bank(bank))


def load_bank(path: str | Path) -> ProblemBank:
    return loads_bank(Path(path).read_text())
