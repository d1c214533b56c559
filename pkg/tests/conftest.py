import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from sreplab.rng import make_stream

# compiled kernels make the first call of a property test slow
settings.register_profile("sreplab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sreplab")

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def stream():
    return make_stream(20240611)


def load_config(name: str) -> dict:
    return json.loads((CONFIGS / name).read_text())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, line = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {line}")
