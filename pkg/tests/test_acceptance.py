"""Acceptance criteria, one test each, each printing a ``criterion N: PASS/FAIL`` line.

The curriculum criteria share a cache of runs, so a criterion's measured time
covers only the runs it is first to need. Run standalone with
``python tests/test_acceptance.py`` or through pytest.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from actor_curator.actor import (
    TabularPolicy,
    actor_update,
    exact_performance,
    group_advantage,
    rollout,
    sequence_ratio,
)
from actor_curator.bank import BankSpec, generate_bank
from actor_curator.config import config_from_dict, load_yaml
from actor_curator.curator_tabular import CuratorDistribution, osmd_step
from actor_curator.harness import (
    regret_scaling,
    run_curriculum,
    verify_additivity,
    verify_gradients,
    verify_second_moment,
    verify_unbiasedness,
)
from actor_curator.sleeping import BanditConfig
from actor_curator.utility import exact_utilities, mean_abs_advantage

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEEDS = list(range(20))
RESULTS: dict[int, str] = {}


def record(n: int, passed: bool, elapsed: float, budget: float, detail: str) -> None:
    ok = passed and elapsed < budget
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s / {budget:.0f}s) {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    assert passed, line
    assert elapsed < budget, line


@functools.lru_cache(maxsize=None)
def curriculum_summary(curator: str, seed: int) -> dict:
    base = load_yaml(CONFIGS / "curriculum_prerequisite.yaml")
    base["curator"] = load_yaml(CONFIGS / "curator_presets.yaml")[curator]
    base["record_feedback"] = False
    config = config_from_dict(base)
    return run_curriculum(config, seed=seed).summary


def curriculum_summaries(curator: str) -> list[dict]:
    return [curriculum_summary(curator, s) for s in SEEDS]


def steps_or_horizon(summary: dict, horizon: int = 600) -> int:
    # runs that never reach the threshold count as one step past the horizon
    s = summary["steps_to_threshold"]
    return horizon + 1 if s is None else s


# -- statistical and algebraic checks ---------------------------------------

def test_criterion_1_unbiasedness():
    t0 = time.perf_counter()
    rep = verify_unbiasedness(reps=200_000, seed=0, k=3, draws=2)
    z1, z2 = rep["single_stage"]["max_bias_over_se"], rep["two_stage"]["max_bias_over_se"]
    record(1, rep["passed"], time.perf_counter() - t0, 60,
           f"max |bias|/SE single {z1:.2f}, two-stage {z2:.2f} (< 4)")


def test_criterion_2_additive_decomposition():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        size, m = int(rng.integers(3, 12)), int(rng.integers(2, 6))
        raw = rng.uniform(0.5, 1.5, size)
        bank = generate_bank(BankSpec(size=size, answer_count=m, structure="independent",
                                      seed=int(rng.integers(2**31)), eval_weights=tuple(raw / raw.sum())))
        old = TabularPolicy(rng.normal(0.0, 1.0, (size, m)), learning_rate=float(rng.uniform(0.1, 2.0)))
        picks = rng.choice(size, size=int(rng.integers(1, size + 1)), replace=False)
        new = actor_update(old, [rollout(old, bank, int(x), 8, rng) for x in picks]).policy
        dj = exact_performance(new, bank) - exact_performance(old, bank)
        worst = max(worst, abs(exact_utilities(old, new, bank).sum() - dj))
    record(2, worst < 1e-9, time.perf_counter() - t0, 10, f"max |sum u - dJ| {worst:.2e} (< 1e-9)")


def test_criterion_3_second_moment():
    t0 = time.perf_counter()
    rep = verify_second_moment(n_configs=20, rounds=100_000, seed=0)
    slack = min(r["bound"] + 3 * r["se"] - r["mean"] for r in rep["configs"])
    record(3, rep["passed"], time.perf_counter() - t0, 120,
           f"{sum(r['passed'] for r in rep['configs'])}/20 configs within k/s + 3 SE, min slack {slack:.3f}")


def test_criterion_4_regret_scaling():
    t0 = time.perf_counter()
    cfg = load_yaml(CONFIGS / "bandit_abrupt_switch.yaml")
    seeds = cfg.pop("seeds")
    cfg.pop("horizons")
    base = BanditConfig(**cfg)
    ratio_rep = regret_scaling(base, [2000, 20000], seeds)
    ratio = ratio_rep["per_step"][1] / ratio_rep["per_step"][0]
    slope = regret_scaling(base, [2000, 8000, 32000], seeds)["slope"]
    record(4, ratio < 0.5 and slope <= 0.85, time.perf_counter() - t0, 300,
           f"per-step regret ratio {ratio:.3f} (< 0.5), log-log slope {slope:.3f} (<= 0.85)")


def test_criterion_7_gradients():
    t0 = time.perf_counter()
    rep = verify_gradients(n_pairs=50, seed=0)
    worst = max(rep["max_relative_error"].values())
    record(7, rep["passed"], time.perf_counter() - t0, 5, f"max relative error {worst:.2e} (< 1e-5)")


def test_criterion_8_closed_forms():
    t0 = time.perf_counter()
    grid = np.linspace(0.0, 1.0, 101)
    # direct expectation of |A| for std-normalized Bernoulli(p) advantages
    direct = np.array([0.0 if p in (0.0, 1.0) else
                       p * (1 - p) / math.sqrt(p * (1 - p)) + (1 - p) * p / math.sqrt(p * (1 - p))
                       for p in grid])
    abs_err = max(abs(mean_abs_advantage(float(p)) - d) for p, d in zip(grid, direct))
    grpo = group_advantage([1, 0, 1, 0], "mean")
    bank = generate_bank(BankSpec(size=3, answer_count=3, structure="independent", seed=0))
    pol = TabularPolicy(np.random.default_rng(0).normal(size=(3, 3)))
    grp = rollout(pol, bank, 1, 6, np.random.default_rng(1))
    grp = dataclasses.replace(grp, logprob_new=grp.logprob_old.copy())
    ratio = sequence_ratio(grp)
    step = osmd_step(CuratorDistribution(np.array([0.5, 0.5]), alpha=0.0, eta=1.0),
                     [math.log(2.0), 0.0]).probabilities()
    ok = (abs_err <= 1e-12 and np.array_equal(grpo, [0.5, -0.5, 0.5, -0.5])
          and np.allclose(ratio, 1.0, rtol=0, atol=1e-15) and np.allclose(step, [2 / 3, 1 / 3], atol=1e-12))
    record(8, ok, time.perf_counter() - t0, 1,
           f"|A| grid err {abs_err:.1e}, group advantages {grpo.tolist()}, identical-policy sequence ratio {float(ratio.max()):.1f}, "
           f"OSMD step {np.round(step, 4).tolist()}")


def test_criterion_9_first_order_additivity():
    t0 = time.perf_counter()
    rep = verify_additivity(n_instances=10, seed=0, lrs=(0.1, 0.05, 0.025))
    r = rep["shrink_ratios"]
    record(9, rep["passed"], time.perf_counter() - t0, 10,
           f"shrink ratios in [{min(r):.2f}, {max(r):.2f}] (need [3, 5])")


# -- curriculum experiments --------------------------------------------------

@pytest.mark.slow
def test_criterion_5_curriculum_gain():
    t0 = time.perf_counter()
    uni = curriculum_summaries("uniform")
    uni_steps = np.median([steps_or_horizon(s) for s in uni])
    uni_j = np.median([s["final_j"] for s in uni])
    ok, parts = True, [f"uniform median steps {uni_steps:.0f}, final J {uni_j:.4f}"]
    for name in ("tabular_osmd", "approx_clipped"):
        runs = curriculum_summaries(name)
        steps = np.median([steps_or_horizon(s) for s in runs])
        final = np.median([s["final_j"] for s in runs])
        ok &= steps < uni_steps and final >= uni_j - 0.01
        parts.append(f"{name} {steps:.0f}, {final:.4f}")
    record(5, bool(ok), time.perf_counter() - t0, 600, "; ".join(parts))


@pytest.mark.slow
def test_criterion_6_ablation_ordering():
    t0 = time.perf_counter()
    med = {name: float(np.median([s["final_j"] for s in curriculum_summaries(name)]))
           for name in ("approx_clipped", "abs_adv", "regression")}
    ok = med["approx_clipped"] >= med["abs_adv"] and med["approx_clipped"] >= med["regression"]
    record(6, ok, time.perf_counter() - t0, 900,
           ", ".join(f"{k} median final J {v:.4f}" for k, v in med.items()))


@pytest.mark.slow
def test_criterion_10_difficulty_progression():
    t0 = time.perf_counter()
    runs = curriculum_summaries("tabular_osmd")
    wins = sum(s["difficulty_last_quartile"] > s["difficulty_first_quartile"] for s in runs)
    record(10, wins >= 16, time.perf_counter() - t0, 600, f"{wins}/20 seeds harder in the last quartile (>= 16)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
