import numpy as np
import pytest

from rmisvm.data import Bag, Dataset, Instance, SynthConfig, generate_synthetic


def make_bag(rows, label=1, bag_id="b"):
    return Bag(bag_id, label, tuple(Instance.from_dense(r) for r in np.atleast_2d(rows)))


def one_hot_bag(scores, label=1, bag_id="b"):
    """Bag whose instance j is scores[j] * e_j, so w = ones gives those scores."""
    m = len(scores)
    return make_bag(np.diag(np.asarray(scores, dtype=float)), label, bag_id), np.ones(m)


@pytest.fixture(scope="session")
def synth_sets():
    """Default generator output for seeds 0..4."""
    return [generate_synthetic(SynthConfig(), seed) for seed in range(5)]


@pytest.fixture
def tiny_dataset():
    return Dataset(
        (
            make_bag([[1.0, 0.0, 0.5], [0.0, 2.0, 0.0]], 1, "p1"),
            make_bag([[0.0, -1.0, 0.0]], 0, "n1"),
            make_bag([[0.3, 0.3, 0.3], [1.0, 1.0, 0.0], [0.0, 0.0, -2.0]], 0, "n2"),
        ),
        3,
    )


# one pass/fail line per acceptance criterion in the terminal summary
_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        prev = _CRITERIA.get(name)
        if prev is None or outcome == "FAIL":
            _CRITERIA[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"{outcome:4s}  {name}")
