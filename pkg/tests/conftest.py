import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from actor_curator.bank import BankSpec, generate_bank

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_bank():
    return generate_bank(BankSpec(size=6, answer_count=3, structure="independent",
                                  difficulty_law="uniform", seed=3))


@pytest.fixture
def prereq_bank():
    return generate_bank(BankSpec(size=60, answer_count=4, structure="prerequisite",
                                  difficulty_law="uniform", seed=5))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
