import numpy as np
import pytest

from decac.features import SoftmaxPolicy, default_features
from decac.mamdp import make_random_mamdp
from decac.topology import CommGraph, metropolis_weights

# The reference instance used by the critic, gradient-decay and runner tests.
REF_AGENTS, REF_STATES, REF_SEED, REF_GAMMA = 3, 10, 0, 0.1


def reference_mdp():
    return make_random_mamdp(REF_AGENTS, REF_STATES, (2,) * REF_AGENTS, seed=REF_SEED, gamma=REF_GAMMA)


def random_policy(mdp, rng, scale=1.0):
    return SoftmaxPolicy(
        mdp.n_states,
        mdp.action_counts,
        tuple(rng.normal(0.0, scale, mdp.n_states * c) for c in mdp.action_counts),
    )


@pytest.fixture
def ref_mdp():
    return reference_mdp()


@pytest.fixture
def ref_setup():
    mdp = reference_mdp()
    return mdp, metropolis_weights(CommGraph.ring(REF_AGENTS)), default_features(mdp)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def acceptance_report(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
