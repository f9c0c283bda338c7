import json
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

from game import connectivity_game  # noqa: E402
from topology import graph_from_edges  # noqa: E402

SIX_PLAYER_C = [[1, 2], [3, 4], [5, 6], [7, 8], [9, 10], [11, 12]]
SIX_PLAYER_NE = [-2.245, -3.14, -2.38, -3.28, -2.51, -3.42, -2.65, -3.56, -2.8, -3.71, -2.95, -3.85]
RING_CHORD = [[1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 1], [1, 4]]


def read_raw(name):
    with open(os.path.join(ROOT, "configs", f"{name}.json")) as f:
        return json.load(f)


@pytest.fixture
def connectivity():
    return connectivity_game(SIX_PLAYER_C)


@pytest.fixture
def six_player_ne():
    return np.array(SIX_PLAYER_NE)


@pytest.fixture
def ring_chord():
    return graph_from_edges(6, RING_CHORD)


@pytest.fixture
def unit_edge():
    return graph_from_edges(2, [[1, 2]])


@pytest.fixture
def quad_raw():
    return read_raw("quadratic-alg1")


@pytest.fixture
def toy_raw():
    return read_raw("toy-alg2")


@pytest.fixture
def paper1_raw():
    return read_raw("paper-alg1")


@pytest.fixture
def paper2_raw():
    return read_raw("paper-alg2")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
