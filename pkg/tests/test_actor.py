import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from actor_curator.actor import (
    RolloutGroup,
    TabularPolicy,
    actor_update,
    exact_performance,
    expected_step_gains,
    first_order_utility,
    gate_state,
    group_advantage,
    init_policy,
    load_policy,
    reward_table,
    rollout,
    save_policy,
    sequence_ratio,
)
from actor_curator.bank import BankSpec, Problem, ProblemBank, generate_bank
from actor_curator.errors import ConfigurationError, StateError


def _bank(n=2, m=2, weights=None, structure="independent", buckets=None, n_buckets=1):
    weights = weights or [1.0] * n
    problems = tuple(Problem(i, 0.5, (0.0,), 0, w) for i, w in enumerate(weights))
    prereq = tuple((b, (b - 1,) if b else ()) for b in range(n_buckets)) if structure == "prerequisite" else ()
    return ProblemBank(problems, m, structure, tuple(buckets or [0] * n), n_buckets, prerequisites=prereq)


def _group(rewards, lp_old=None, lp_new=None, x=0):
    n = len(rewards)
    return RolloutGroup(x, np.zeros(n, int), np.asarray(rewards, float),
                        np.zeros(n) if lp_old is None else lp_old, lp_new)


# -- rollouts ---------------------------------------------------------------

def test_symmetric_rollouts_succeed_half_the_time(rng):
    bank = _bank(1, 2)
    g = rollout(TabularPolicy(np.zeros((1, 2))), bank, 0, 100_000, rng)
    se = math.sqrt(0.25 / 100_000)
    assert abs(g.rewards.mean() - 0.5) < 3 * se
    np.testing.assert_allclose(g.logprob_old, math.log(0.5))


def test_closed_gate_gives_zero_reward(rng):
    bank = _bank(2, 2, structure="prerequisite", buckets=[0, 1], n_buckets=2)
    policy = TabularPolicy(np.array([[-5.0, 5.0], [5.0, -5.0]]))
    assert not gate_state(policy.probs(), bank)[1]
    g = rollout(policy, bank, 1, 1000, rng)
    assert np.all(g.rewards == 0) and np.mean(g.answers == 0) > 0.99


def test_confident_policy_success_rate(rng):
    g = rollout(TabularPolicy(np.array([[10.0, -10.0]])), _bank(1, 2), 0, 100_000, rng)
    assert g.rewards.mean() > 0.999
    assert 1 / (1 + math.exp(-20)) > 0.999


def test_unknown_problem_id(rng):
    with pytest.raises(IndexError):
        rollout(TabularPolicy(np.zeros((2, 2))), _bank(), 5, 4, rng)


def test_gate_opens_above_threshold():
    bank = _bank(2, 2, structure="prerequisite", buckets=[0, 1], n_buckets=2)
    # bucket-0 success 0.7 > gate 0.6 opens bucket 1
    logit = math.log(0.7 / 0.3)
    policy = TabularPolicy(np.array([[logit, 0.0], [0.0, 0.0]]))
    assert gate_state(policy.probs(), bank).tolist() == [True, True]
    assert reward_table(policy, bank)[1, 0] == 1.0


# -- advantages and ratios --------------------------------------------------

def test_group_advantage_examples():
    np.testing.assert_array_equal(group_advantage([1, 0, 1, 0], "mean"), [0.5, -0.5, 0.5, -0.5])
    np.testing.assert_array_equal(group_advantage([1, 0, 1, 0], "std"), [1, -1, 1, -1])
    for rule in ("mean", "std"):
        np.testing.assert_array_equal(group_advantage([1, 1, 1], rule), [0, 0, 0])


def test_group_advantage_unknown_rule():
    with pytest.raises(ConfigurationError):
        group_advantage([1, 0], "median")


def test_sequence_ratio_examples():
    g = _group([1, 0], lp_old=np.log([0.3, 0.5]), lp_new=np.log([0.3, 0.5]))
    np.testing.assert_array_equal(sequence_ratio(g), [1.0, 1.0])
    g = _group([1], lp_old=np.array([0.0]), lp_new=np.array([math.log(2)]))
    np.testing.assert_allclose(sequence_ratio(g), [2.0])
    # two tokens with ratios 2 and 0.5: summed log-ratio 0, geometric mean 1
    g = RolloutGroup(0, [0], [1.0], [0.0], np.array([math.log(2) + math.log(0.5)]), lengths=[2])
    np.testing.assert_allclose(sequence_ratio(g), [1.0])


def test_sequence_ratio_needs_new_logprobs():
    with pytest.raises(StateError):
        sequence_ratio(_group([1.0]))


# -- updates ----------------------------------------------------------------

def test_zero_advantage_leaves_logits():
    policy = TabularPolicy(np.array([[0.3, -0.2]]))
    upd = actor_update(policy, [_group([1.0, 1.0], lp_old=policy.log_probs()[0, [0, 0]])])
    np.testing.assert_array_equal(upd.policy.logits, policy.logits)
    assert upd.grad_norm == 0.0


def test_positive_advantage_raises_probability():
    policy = TabularPolicy(np.zeros((1, 3)), learning_rate=0.5)
    lp = policy.log_probs()[0]
    g = RolloutGroup(0, [1, 2], [1.0, 0.0], lp[[1, 2]])
    new = actor_update(policy, [g]).policy
    assert new.probs()[0, 1] > policy.probs()[0, 1]


def test_clip_saturation_zeroes_sample():
    # ratio 2 with positive advantage sits outside (0.8, 1.2): no gradient from that sample
    policy = TabularPolicy(np.zeros((1, 2)), clip_range=(0.8, 1.2))
    lp = policy.log_probs()[0]
    g = RolloutGroup(0, [0, 1], [1.0, 0.0], lp[[0, 1]] - np.array([math.log(2), 0.0]))
    grad_only_second = actor_update(policy, [g]).policy.logits - policy.logits
    # only the in-range sample (ratio 1, advantage -0.5) contributes: it lowers answer 1
    assert grad_only_second[0, 1] < 0 and grad_only_second[0, 0] > 0
    unclipped = actor_update(policy.replace(clip_range=None), [g]).policy.logits - policy.logits
    assert not np.allclose(unclipped, grad_only_second)


def test_update_fills_new_logprobs(rng, small_bank):
    policy = init_policy(small_bank, skill=0.0, learning_rate=1.0)
    groups = [rollout(policy, small_bank, x, 8, rng) for x in range(3)]
    upd = actor_update(policy, groups)
    for g in upd.groups:
        np.testing.assert_allclose(g.logprob_new, upd.policy.log_probs()[g.problem_id, g.answers])


def test_empty_dataset_rejected():
    with pytest.raises(ConfigurationError):
        actor_update(TabularPolicy(np.zeros((1, 2))), [])


def test_true_baseline_uses_expected_reward():
    policy = TabularPolicy(np.zeros((1, 2)), baseline="true")
    g = RolloutGroup(0, [0], [1.0], [math.log(0.5)], expected_reward=0.5)
    new = actor_update(policy, [g]).policy
    # single sample with advantage 0.5: group baseline would give zero
    assert new.probs()[0, 0] > 0.5


# -- exact evaluation -------------------------------------------------------

def test_exact_performance_examples():
    bank = _bank(2, 2)
    policy = TabularPolicy(np.array([[0.0, 0.0], [50.0, -50.0]]))
    assert exact_performance(policy, bank) == pytest.approx(0.75, abs=1e-12)
    assert exact_performance(TabularPolicy(np.array([[60.0, 0.0], [60.0, 0.0]])), bank) == pytest.approx(1.0)
    assert exact_performance(TabularPolicy(np.zeros((2, 4))), _bank(2, 4)) == pytest.approx(0.25)


def test_repeated_updates_drive_success_up():
    bank = _bank(1, 3)
    policy = TabularPolicy(np.zeros((1, 3)), learning_rate=0.1)
    history = [exact_performance(policy, bank)]
    for _ in range(100):
        # a fixed informative group: one correct, one incorrect answer
        lp = policy.log_probs()[0]
        g = RolloutGroup(0, [0, 1], [1.0, 0.0], lp[[0, 1]])
        policy = actor_update(policy, [g]).policy
        history.append(exact_performance(policy, bank))
    assert np.all(np.diff(history) > 0)


def test_expected_step_gains_match_enumeration(small_bank):
    # enumerate all answer pairs for a group of size 2 on each problem
    policy = init_policy(small_bank, skill=1.0, learning_rate=0.7)
    rewards = reward_table(policy, small_bank)
    gains = expected_step_gains(policy, small_bank, np.arange(len(small_bank)), 2, rewards)
    m = small_bank.answer_count
    for x in range(len(small_bank)):
        pi = policy.probs()[x]
        mean_grad = np.zeros(m)
        for a in range(m):
            for b in range(m):
                r = rewards[x, [a, b]]
                adv = r - r.mean()
                row = np.zeros(m)
                for ans, ad in zip((a, b), adv):
                    row += ad * (np.eye(m)[ans] - pi) / 2
                mean_grad += pi[a] * pi[b] * row
        new_logits = policy.logits[x] + policy.learning_rate * mean_grad
        new_pi = np.exp(new_logits - new_logits.max())
        new_pi /= new_pi.sum()
        expect = small_bank.p_eval[x] * (new_pi @ rewards[x] - pi @ rewards[x])
        assert gains[x] == pytest.approx(expect, abs=1e-12)


def test_first_order_utility_is_linear_in_lr(rng, small_bank):
    policy = TabularPolicy(rng.normal(size=(6, 3)))
    g = RolloutGroup(2, [0, 1, 2], [1.0, 0.0, 0.0], policy.log_probs()[2, [0, 1, 2]])
    vals = [first_order_utility(policy, actor_update(policy.replace(learning_rate=lr), [g]).policy,
                                small_bank, 2) for lr in (0.1, 0.2)]
    assert vals[1] == pytest.approx(2 * vals[0], rel=1e-12)


def test_policy_round_trip(tmp_path):
    policy = TabularPolicy(np.array([[0.1, -0.3], [2.0, 1e-17]]), 0.3, "grpo_std_normalized", (0.8, 1.2), step=7)
    save_policy(policy, tmp_path / "p.json")
    again = load_policy(tmp_path / "p.json")
    np.testing.assert_array_equal(again.logits, policy.logits)
    assert (again.update_rule, again.clip_range, again.step, again.learning_rate) == \
        ("grpo_std_normalized", (0.8, 1.2), 7, 0.3)


@pytest.mark.parametrize("kwargs", [dict(learning_rate=0), dict(update_rule="sgd"),
                                    dict(clip_range=(1.1, 1.2)), dict(baseline="median")])
def test_invalid_policy(kwargs):
    with pytest.raises(ConfigurationError):
        TabularPolicy(np.zeros((1, 2)), **kwargs)


@given(seed=st.integers(0, 10_000), steps=st.integers(1, 15),
       rule=st.sampled_from(["reinforce_mean_baseline", "grpo_std_normalized", "gspo_sequence"]))
def test_rows_stay_distributions(seed, steps, rule):
    rng = np.random.default_rng(seed)
    bank = generate_bank(BankSpec(size=8, answer_count=3, structure="prerequisite",
                                  difficulty_law="uniform", seed=seed))
    policy = init_policy(bank, skill=1.0, learning_rate=float(rng.uniform(0.1, 5.0)), update_rule=rule)
    for _ in range(steps):
        groups = [rollout(policy, bank, int(x), 4, rng) for x in rng.choice(8, 3, replace=False)]
        policy = actor_update(policy, groups).policy
    probs = policy.probs()
    assert np.all(np.isfinite(policy.logits))
    assert np.all(probs >= 0) and np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert 0.0 <= exact_performance(policy, bank) <= 1.0
