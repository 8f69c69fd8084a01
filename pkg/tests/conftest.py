from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tcrmdp.envs import ChainConfig, RandomInstanceConfig, build_chain, random_instance  # noqa: E402


def tiny(seed: int, n_states: int = 2, n_actions: int = 2, segments: int = 3, dims: int = 1, gamma: float = 0.9,
         deterministic: bool = False):
    cfg = RandomInstanceConfig(n_states, n_actions, dims, segments, gamma, deterministic)
    return random_instance(np.random.default_rng(seed), cfg)


@pytest.fixture
def two_goal_chain():
    return build_chain(ChainConfig(n_states=5, goal=(0, 4), success_low=0.1, success_high=0.9, mirror_left=True))


@pytest.fixture
def flipped_chain():
    return build_chain(ChainConfig(n_states=6, success_low=0.1, success_high=0.9, flip_from=3))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(RESULTS):
        ok, detail = RESULTS[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
