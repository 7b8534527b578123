import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from playtest import fixtures
from playtest.agents import GoalSpec, HeuristicSpec


@pytest.fixture(scope="session")
def desk_base():
    return fixtures.load("desk_base")


@pytest.fixture(scope="session")
def romance_outlier():
    return fixtures.load("romance_outlier")


@pytest.fixture(scope="session")
def bugged_event():
    return fixtures.load("bugged_event")


@pytest.fixture(scope="session")
def desk_objects():
    return fixtures.load("desk_objects")


@pytest.fixture(scope="session")
def build_a():
    return fixtures.load("build_a")


@pytest.fixture(scope="session")
def build_b():
    return fixtures.load("build_b")


@pytest.fixture()
def career_goal():
    def make(career, level, max_minutes=20_000, max_actions=2_000):
        return GoalSpec(kind="career_level_reached", career=career, level=level,
                        max_minutes=max_minutes, max_actions=max_actions)
    return make


@pytest.fixture()
def career_heuristic():
    return HeuristicSpec(weights={"career_xp": 1.0})
