import os
import sys

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from gapcr import build_sample  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# dyadic values keep prefix sums exact, so ties with censor times are real ties
CENSOR_VALUES = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0]
GAP_VALUES = [0.25, 0.5, 0.75, 1.0, 1.5]


def to_sample(subjects, num_causes=2):
    """Sample from oracle-style ``(C, [(gap, cause), ...])`` subjects."""
    rows, censor = [], {}
    for i, (c, events) in enumerate(subjects):
        censor[i] = c
        for j, (gap, cause) in enumerate(events, start=1):
            rows.append((i, j, gap, cause))
    return build_sample(rows, censor, num_causes=num_causes, subject_ids=list(censor))


@st.composite
def subject_lists(draw, min_n=1, max_n=10, num_causes=2, censor_values=CENSOR_VALUES):
    n = draw(st.integers(min_n, max_n))
    out = []
    for _ in range(n):
        c = draw(st.sampled_from(censor_values))
        events, y = [], 0.0
        for _ in range(draw(st.integers(0, 4))):
            gap = draw(st.sampled_from(GAP_VALUES))
            if y + gap >= c:
                break
            y += gap
            events.append((gap, draw(st.integers(1, num_causes))))
        out.append((c, events))
    return out


def random_subjects(rng, n, num_causes=2, censor_upper=4.0, rate=1.0, continuous=True):
    """Continuous-time subjects (no ties with probability one)."""
    out = []
    for _ in range(n):
        c = float(rng.uniform(0.2, censor_upper))
        events, y = [], 0.0
        while True:
            gap = float(rng.exponential(1 / rate))
            if y + gap >= c:
                break
            y += gap
            events.append((gap, int(rng.integers(1, num_causes + 1))))
        out.append((c, events))
    return out


@pytest.fixture
def four_subjects():
    """Stage-1 gaps (1.5, cause 1), (3, cause 2), censored at 6, (5, cause 1); C = 2, 4, 6, 8."""
    return [(2.0, [(1.5, 1)]), (4.0, [(3.0, 2)]), (6.0, []), (8.0, [(5.0, 1)])]


@pytest.fixture
def four_sample(four_subjects):
    return to_sample(four_subjects)


@pytest.fixture
def six_subjects():
    """Both causes at stages 1 and 2, with censoring at stage 2 and 3."""
    return [
        (4.0, [(0.5, 1), (1.0, 1)]),
        (5.0, [(1.0, 1), (2.0, 2), (0.5, 1)]),
        (3.0, [(0.75, 2), (0.5, 1)]),
        (6.0, [(1.5, 2), (1.25, 2), (1.0, 1)]),
        (2.5, [(0.25, 1)]),
        (7.0, [(2.0, 1), (0.75, 2), (3.0, 2)]),
    ]


@pytest.fixture
def six_sample(six_subjects):
    return to_sample(six_subjects)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# -- acceptance report ---------------------------------------------------------


@pytest.fixture(scope="session")
def acceptance_report(pytestconfig):
    """Append ``(criterion, passed, detail)`` lines shown in the terminal summary."""
    lines = []
    pytestconfig._acceptance_lines = lines
    return lines


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
