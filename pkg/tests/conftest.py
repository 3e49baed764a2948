import os
import sys

import numpy as np
import pytest

from atesim.scenario import Scenario

STUB = os.path.join(os.path.dirname(__file__), "servers", "stub_server.py")


def stub_endpoint(mode: str, log: str | None = None) -> str:
    cmd = f"stdio:{sys.executable} {STUB} {mode}"
    if log:
        cmd += f" --log {log}"
    return cmd


def make_scenario(p_z, p_x, p_y, names=None):
    """Assemble a scenario whose strata are the binary expansions 0..K-1."""
    p_z = np.asarray(p_z, dtype=float)
    k = p_z.shape[0]
    d = max(1, int(np.ceil(np.log2(k))) if k > 1 else 1)
    strata = np.array(
        [[(i >> b) & 1 for b in range(d)] for i in range(k)], dtype=np.uint8
    )
    names = tuple(names) if names else tuple(f"z{j+1}" for j in range(d))
    s = Scenario(
        p_z=p_z,
        p_x_given_z=np.asarray(p_x, dtype=float),
        p_y_given_xz=np.asarray(p_y, dtype=float),
        strata=strata,
        confounder_names=names,
    )
    s.validate()
    return s


@pytest.fixture
def toy_scenario():
    # two strata, one confounder, strong confounding
    return make_scenario(
        p_z=[0.4, 0.6],
        p_x=[0.3, 0.7],
        p_y=[[0.2, 0.4], [0.5, 0.8]],
    )


@pytest.fixture
def rich_scenario():
    # four strata over two confounders, mild effect modification
    return make_scenario(
        p_z=[0.1, 0.2, 0.3, 0.4],
        p_x=[0.25, 0.4, 0.55, 0.7],
        p_y=[[0.15, 0.3], [0.25, 0.35], [0.4, 0.6], [0.55, 0.6]],
    )


@pytest.fixture
def randomized_scenario():
    return make_scenario(
        p_z=[0.5, 0.5],
        p_x=[0.5, 0.5],
        p_y=[[0.3, 0.5], [0.6, 0.7]],
    )
