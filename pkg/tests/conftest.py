"""Shared fixtures and matrix generators for the test suite."""

import numpy as np
import pytest
from hypothesis import strategies as st

from chainopt import validate_stochastic

# 9-state reference chain: a period-2 class, a period-3 class, and two
# transient states feeding both.
NINE_STATE_ROWS = [
    [0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.3, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.1, 0.0, 0.0, 0.2, 0.0, 0.7, 0.0],
    [0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.0],
]

# Valid starting distributions for the 9-state chain used in weight tests.
NINE_STATE_STARTS = [
    [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
]


@pytest.fixture
def nine_state():
    return validate_stochastic(np.asarray(NINE_STATE_ROWS))


def unit_mass(m, state):
    vec = np.zeros(m)
    vec[state] = 1.0
    return vec


@st.composite
def stochastic_matrices(draw, max_m=8):
    """Dense-ish random row-stochastic matrices from small integer weights."""
    m = draw(st.integers(1, max_m))
    rows = []
    for _ in range(m):
        weights = draw(st.lists(st.integers(0, 9), min_size=m, max_size=m))
        if sum(weights) == 0:
            weights[draw(st.integers(0, m - 1))] = 1
        rows.append(weights)
    mat = np.asarray(rows, dtype=np.float64)
    mat /= mat.sum(axis=1, keepdims=True)
    return mat


@st.composite
def structured_matrices(draw, max_m=8):
    """Matrices with a known decomposition, built from cyclic blocks.

    Each recurrent class is a pure directed cycle (period equal to its
    size); remaining states are transient rows spreading uniformly over
    all states. Returns (matrix, expected classes, expected periods,
    expected transient states).
    """
    m = draw(st.integers(2, max_m))
    sizes = []
    remaining = m
    while remaining > 0 and len(sizes) < 3:
        take = draw(st.integers(1, remaining))
        sizes.append(take)
        remaining -= take
        if remaining and draw(st.booleans()):
            break
    transient_count = remaining
    mat = np.zeros((m, m))
    classes = []
    start = 0
    for size in sizes:
        members = list(range(start, start + size))
        for pos, state in enumerate(members):
            mat[state, members[(pos + 1) % size]] = 1.0
        classes.append(tuple(members))
        start += size
    for state in range(start, m):
        mat[state, :] = 1.0 / m
    return mat, classes, [len(c) for c in classes], list(range(start, m))
