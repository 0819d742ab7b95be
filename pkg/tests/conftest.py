import numpy as np
import pytest

from rrfsim import geometry, metric


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): acceptance criterion, reported in the summary"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and report.when == "call":
        report.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            for key, value in getattr(report, "user_properties", []):
                if key == "criterion":
                    word = "PASS" if report.passed else "FAIL"
                    rows.append(f"{word} {value} ({report.duration:.2f}s)")
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for row in rows:
            terminalreporter.write_line(row)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def layout_33():
    return geometry.layout_patches(112, 112, 28, 28, 14, corner_exclusion=True)


@pytest.fixture
def layout_5():
    return geometry.layout_patches(112, 112, 56, 56, 28, corner_exclusion=True)


def make_set(rng, k, d, image_id="img", fingerprint=0):
    return metric.EmbeddingSet(
        image_id=image_id,
        matrix=rng.standard_normal((k, d)),
        layout_fingerprint=fingerprint,
    )
