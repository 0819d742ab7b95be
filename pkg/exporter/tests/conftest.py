import json

import numpy as np
import pytest
from PIL import Image


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


LAYOUT_33 = {
    "W": 112,
    "H": 112,
    "w": 28,
    "h": 28,
    "stride": 14,
    "corner_exclusion": True,
    "positions": [
        [x, y]
        for y in range(0, 85, 14)
        for x in range(0, 85, 14)
        if not ((x < 28 or x > 56) and (y < 28 or y > 56))
    ],
}


@pytest.fixture
def layout_json(tmp_path):
    path = tmp_path / "layout.json"
    path.write_text(json.dumps(LAYOUT_33))
    return path


@pytest.fixture
def four_images(tmp_path):
    """Four deterministic 112x112 RGB images, returned as (dir, arrays)."""
    rng = np.random.default_rng(2024)
    images_dir = tmp_path / "images"
    images_dir.mkdir()
    arrays = {}
    for i in range(4):
        pixels = rng.integers(1, 256, size=(112, 112, 3), dtype=np.uint8)
        name = f"face{i:02d}"
        Image.fromarray(pixels, mode="RGB").save(images_dir / f"{name}.png")
        arrays[name] = pixels
    return images_dir, arrays
