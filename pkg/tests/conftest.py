from pathlib import Path

import pytest

from osodd.io import load_detections, load_ground_truth, load_split

FIXTURE3 = Path(__file__).parent / "data" / "fixture3"


@pytest.fixture
def fixture3():
    """The bundled 3-image fixture: (images, gts, dets, split)."""
    images, gts = load_ground_truth(FIXTURE3 / "gt.json")
    return images, gts, load_detections(FIXTURE3 / "dets.jsonl"), load_split(FIXTURE3 / "split.json")


@pytest.fixture
def fixture3_paths():
    return {name: str(FIXTURE3 / f) for name, f in
            (("gt", "gt.json"), ("dets", "dets.jsonl"), ("split", "split.json"))}


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed") for r in terminalreporter.stats.get(key, [])
               if r.when == "call" and "test_acceptance.py" in r.nodeid]
    if not reports:
        return
    terminalreporter.section("acceptance criteria")
    for r in sorted(reports, key=lambda r: r.nodeid):
        name = r.nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if r.passed else 'FAIL'}  {name}")
