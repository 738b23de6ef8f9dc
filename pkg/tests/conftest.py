import os

import pytest

from treetalk.env import Agent
from treetalk.policies import RolloutConfig, policy_pair, sample_rollouts
from treetalk.tree import build_dataset, fit_tree

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")

# one pass/fail line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def assert_golden(name: str, text: str):
    """Byte-compare against tests/golden/<name>; UPDATE_GOLDENS=1 rewrites."""
    path = os.path.join(GOLDEN_DIR, name)
    if os.environ.get("UPDATE_GOLDENS") == "1":
        os.makedirs(GOLDEN_DIR, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return
    with open(path, "r", encoding="utf-8", newline="") as fh:
        expected = fh.read()
    assert text == expected, f"{name} differs from golden (set UPDATE_GOLDENS=1 to regenerate)"


@pytest.fixture(scope="session")
def expert_trajs():
    return sample_rollouts(policy_pair("expert"), RolloutConfig(120, base_seed=0, max_steps=200))


@pytest.fixture(scope="session")
def expert_trees(expert_trajs):
    return {
        role: fit_tree(build_dataset(expert_trajs, role), role=role)
        for role in (Agent.ENGINEER, Agent.MEDIC)
    }


@pytest.fixture(scope="session")
def explore_trajs():
    return sample_rollouts(policy_pair("explore_first"), RolloutConfig(60, base_seed=0, max_steps=200))


@pytest.fixture(scope="session")
def explore_trees(explore_trajs):
    return {
        role: fit_tree(build_dataset(explore_trajs, role), role=role)
        for role in (Agent.ENGINEER, Agent.MEDIC)
    }


@pytest.fixture(scope="session")
def fixed_north_trajs():
    return sample_rollouts(policy_pair("fixed_north"), RolloutConfig(60, base_seed=0, max_steps=60))


@pytest.fixture(scope="session")
def fixed_north_trees(fixed_north_trajs):
    return {
        role: fit_tree(build_dataset(fixed_north_trajs, role), role=role)
        for role in (Agent.ENGINEER, Agent.MEDIC)
    }


@pytest.fixture(scope="session")
def held_out_states():
    """role -> states the training fixtures never saw (disjoint seed range)."""
    trajs = sample_rollouts(policy_pair("expert"), RolloutConfig(40, base_seed=50_000, max_steps=200))
    out = {Agent.ENGINEER: [], Agent.MEDIC: []}
    for traj in trajs:
        out[traj.agent].extend(s.state for s in traj.steps)
    return out
