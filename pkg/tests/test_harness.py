import json

import numpy as np
import pytest

from actor_curator.config import RunConfig, config_from_dict, config_to_dict
from actor_curator.errors import ConfigurationError
from actor_curator.harness import (
    metrics_digest,
    rows_to_csv,
    run_curriculum,
    select_batch,
    steps_to_threshold,
    sweep,
    verify,
)


def small_config(kind="tabular_osmd", **kw):
    data = {
        "bank": {"size": 40, "structure": "prerequisite", "difficulty_law": "uniform"},
        "actor": {"skill": 0.0, "learning_rate": 2.0},
        "curator": {"kind": kind, "eta": 5.0},
        "candidate_batch": 12,
        "training_batch": 4,
        "rollouts_per_problem": 4,
        "total_steps": 25,
        "selection": "without_replacement",
    }
    data.update(kw)
    return config_from_dict(data)


KINDS = ["tabular_osmd", "approx_surrogate", "approx_clipped", "uniform", "sec", "pcl", "regression", "abs_adv"]


@pytest.mark.parametrize("kind", KINDS)
def test_metric_stream_contract(kind):
    res = run_curriculum(small_config(kind), seed=3)
    m = res.metrics
    assert [r["step"] for r in m] == list(range(25))
    for a, b in zip(m, m[1:]):
        # telemetry identity: reported delta J is the next step's J minus this one's
        assert abs(a["exact_j"] + a["delta_j"] - b["exact_j"]) < 1e-12
    for r in m:
        assert 0.0 <= r["exact_j"] <= 1.0
        assert len(r["feedback"]) == 4
        assert len({f["problem_id"] for f in r["feedback"]}) == 4
        assert np.isfinite(r["mean_selected_difficulty"])
    assert res.summary["curator"] == kind


@pytest.mark.parametrize("selection", ["iid", "without_replacement"])
@pytest.mark.parametrize("estimator", ["two_stage", "single_stage"])
def test_modes_run(selection, estimator):
    res = run_curriculum(small_config(selection=selection, estimator=estimator), seed=1)
    assert len(res.metrics) == 25
    if selection == "iid":
        assert all(1 <= len(r["feedback"]) <= 4 for r in res.metrics)


def test_independent_bank_uniform_and_tabular():
    for kind in ("uniform", "tabular_osmd"):
        cfg = small_config(kind, bank={"size": 40, "structure": "independent"})
        assert len(run_curriculum(cfg, seed=0).metrics) == 25


def test_deterministic_per_seed():
    a = run_curriculum(small_config("approx_clipped"), seed=5)
    b = run_curriculum(small_config("approx_clipped"), seed=5)
    assert metrics_digest(a.metrics) == metrics_digest(b.metrics)
    c = run_curriculum(small_config("approx_clipped"), seed=6)
    assert metrics_digest(a.metrics) != metrics_digest(c.metrics)


def test_fully_dormant_run_equals_uniform():
    dormant = run_curriculum(small_config("tabular_osmd", dormant_steps=25), seed=2)
    uniform = run_curriculum(small_config("uniform"), seed=2)
    assert metrics_digest(dormant.metrics) == metrics_digest(uniform.metrics)


def test_warmup_runs():
    res = run_curriculum(small_config("approx_clipped", dormant_steps=5, warmup_steps=10), seed=0)
    assert all(r["curator_loss"] is None for r in res.metrics[:5])
    assert all(r["curator_loss"] is not None for r in res.metrics[5:])


def test_write_run(tmp_path):
    cfg = small_config("approx_clipped")
    run_curriculum(cfg, seed=4, out_dir=tmp_path)
    lines = (tmp_path / "metrics_seed4.jsonl").read_text().splitlines()
    assert len(lines) == 25
    assert set(json.loads(lines[0])) == {"step", "exact_j", "delta_j", "actor_grad_norm", "curator_loss",
                                         "curator_grad_norm", "mean_selected_difficulty", "feedback",
                                         "regret_proxy"}
    assert json.loads((tmp_path / "summary_seed4.json").read_text())["seed"] == 4
    assert config_from_dict(json.loads((tmp_path / "config.json").read_text())) == cfg
    assert (tmp_path / "policy_seed4.json").exists() and (tmp_path / "curator_seed4.json").exists()


def test_invalid_configs():
    with pytest.raises(ConfigurationError):
        run_curriculum(small_config(candidate_batch=2), seed=0)
    with pytest.raises(ConfigurationError):
        run_curriculum(small_config(dormant_steps=20, warmup_steps=10), seed=0)
    with pytest.raises(ConfigurationError):
        run_curriculum(small_config("bogus"), seed=0)
    with pytest.raises(ConfigurationError):
        config_from_dict({"curator": {"temperature": 1}})


def test_config_round_trip():
    cfg = small_config("approx_clipped")
    assert config_from_dict(config_to_dict(cfg)) == cfg
    assert RunConfig().effective_candidates == 64
    assert small_config(estimator="single_stage").effective_candidates == 40


def test_without_replacement_inclusion_estimates(rng):
    cond = np.array([0.4, 0.3, 0.2, 0.1])
    counts = np.zeros(4)
    trials = 4000
    for _ in range(trials):
        local, incl = select_batch(cond, 2, "without_replacement", rng, inclusion_draws=200)
        counts[local] += 1
        assert len(local) == 2 and np.all(incl[local] > 0)
    _, incl = select_batch(cond, 2, "without_replacement", rng, inclusion_draws=200_000)
    np.testing.assert_allclose(counts / trials, incl, atol=4 * np.sqrt(0.25 / trials))
    assert incl.sum() == pytest.approx(2.0)


def test_uniform_selection_inclusion_is_exact(rng):
    local, incl = select_batch(np.full(8, 0.125), 3, "without_replacement", rng)
    assert len(set(local)) == 3
    np.testing.assert_array_equal(incl, 3 / 8)


def test_steps_to_threshold():
    m = [{"step": i, "exact_j": j, "delta_j": d} for i, (j, d) in enumerate([(0.1, 0.5), (0.6, 0.3), (0.9, 0.0)])]
    assert steps_to_threshold(m) == 2
    assert steps_to_threshold(m, 0.95) is None


def test_sweep_contract():
    template = config_to_dict(small_config("uniform", total_steps=10, record_feedback=False))
    single = sweep(template, {"curator.kind": ["uniform"]}, [0])
    direct = run_curriculum(config_from_dict(template), seed=0)
    assert single[0]["final_j"] == direct.summary["final_j"]
    rows = sweep(template, {"curator.kind": ["uniform", "tabular_osmd"], "training_batch": [2, 4]}, [0, 1, 2])
    assert len(rows) == 12
    again = sweep(template, {"curator.kind": ["uniform", "tabular_osmd"], "training_batch": [2, 4]}, [0, 1, 2])
    assert rows_to_csv(rows) == rows_to_csv(again)
    assert rows_to_csv(rows).splitlines()[0].startswith("curator.kind,training_batch,seed")


def test_bandit_sweep():
    rows = sweep({"T": 200, "K": 6, "k": 3}, {"eta": [0.1, 0.5]}, [0], kind="bandit")
    assert len(rows) == 2 and all("final_best_available_regret" in r for r in rows)


def test_verify_report_shape():
    rep = verify("gradients")
    assert rep["passed"] and set(rep) == {"gradients", "passed"}
    with pytest.raises(ConfigurationError):
        verify("nonsense")


def test_sweep_worker_count_does_not_change_rows():
    template = config_to_dict(small_config("tabular_osmd", total_steps=5, record_feedback=False))
    grid = {"curator.eta": [1.0, 10.0]}
    assert rows_to_csv(sweep(template, grid, [0, 1], workers=2)) == rows_to_csv(sweep(template, grid, [0, 1]))
