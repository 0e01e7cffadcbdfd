import os

import hypothesis
import numpy as np
import pytest

from psoca.synthetic import write_dataset

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    """Eight small synthetic scenes, two per category."""
    root = tmp_path_factory.mktemp("toy")
    return write_dataset(root, n_images=8, seed=3, height=48, width=72)


@pytest.fixture(scope="session")
def proxy_manifest(tmp_path_factory):
    """Twenty larger scenes that preprocess down to 128 px, like the real set."""
    root = tmp_path_factory.mktemp("proxy")
    return write_dataset(root, n_images=20, seed=1, height=192, width=288)


# ---------------------------------------------------------- acceptance report

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        marker = next((m for name, m in report.user_properties if name == "criterion"), None)
        if marker is None:
            return
        details = [str(v) for name, v in report.user_properties if name == "detail"]
        _ACCEPTANCE.append((marker, report.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (number, title), outcome, details in sorted(_ACCEPTANCE, key=lambda r: r[0][0]):
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        tr.write_line(f"[{status}] {number}. {title}")
        for d in details:
            tr.write_line(f"         {d}")
