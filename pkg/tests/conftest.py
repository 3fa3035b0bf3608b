import os

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from dramdp.model import MdpModel

ACCEPTANCE_LINES: list[str] = []

settings.register_profile("stress", max_examples=5000, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Append one PASS/FAIL line to the end-of-run acceptance summary."""

    def _report(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def random_simplex(rng, d, support=None):
    p = rng.dirichlet(np.ones(d))
    if support is not None and support < d:
        p[rng.choice(d, d - support, replace=False)] = 0.0
        p /= p.sum()
    return p


def random_model(rng, n_states, n_actions, sparse=False) -> MdpModel:
    kernel = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if sparse:
        mask = rng.random(kernel.shape) < 0.3
        mask[..., 0] = False
        kernel = np.where(mask, 0.0, kernel)
        kernel /= kernel.sum(axis=-1, keepdims=True)
    return MdpModel(reward=rng.random((n_states, n_actions)), kernel=kernel)


def random_ergodic_kernel(rng, d):
    # mixes a sparse random kernel with a little uniform mass so that every power is positive
    K = rng.dirichlet(np.full(d, 0.3), size=d)
    K = 0.9 * K + 0.1 / d
    return K / K.sum(axis=1, keepdims=True)


@st.composite
def prob_vectors(draw, min_size=2, max_size=5, allow_zeros=True):
    d = draw(st.integers(min_size, max_size))
    w = draw(st.lists(st.floats(0.0 if allow_zeros else 0.01, 1.0), min_size=d, max_size=d))
    # positive masses below 1e-9 are dropped: subnormal-scale probabilities
    # are outside the range where the duals resolve anything
    w = np.where(np.asarray(w) < 1e-9, 0.0, np.asarray(w))
    if w.sum() <= 1e-3:
        w = np.ones(d)
    return w / w.sum()


def value_vectors(d, lo=-5.0, hi=5.0):
    return st.lists(st.floats(lo, hi), min_size=d, max_size=d).map(np.asarray)
