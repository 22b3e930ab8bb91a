"""Shared fixtures: the long acceptance runs are computed once per session."""

from pathlib import Path

import pytest

from vpmcf import config as cfg
from vpmcf.cli import execute

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

# results per acceptance criterion; a criterion split over several tests
# (parametrised cases) is summarised on a single line
ACCEPTANCE_RESULTS: dict[int, list[tuple[bool, str]]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    ACCEPTANCE_RESULTS.setdefault(number, []).append((passed, detail))
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        parts = ACCEPTANCE_RESULTS[number]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {number}: " + " | ".join(d for _, d in parts))


def _scenario_run(tmp_path_factory, name):
    out = tmp_path_factory.mktemp(name)
    config = cfg.load(SCENARIOS / f"{name}.toml", [f'output.dir="{out}"'], env={})
    return execute(config)


@pytest.fixture(scope="session")
def hemisphere_run(tmp_path_factory):
    import time

    t0 = time.perf_counter()
    outcome = _scenario_run(tmp_path_factory, "perturbed_hemisphere")
    return outcome, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sphere_run(tmp_path_factory):
    import time

    t0 = time.perf_counter()
    outcome = _scenario_run(tmp_path_factory, "perturbed_sphere")
    return outcome, time.perf_counter() - t0
