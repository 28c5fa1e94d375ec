import time

import pytest

from biso.experiment import ExperimentConfig, run_experiment

CRITERIA: dict[int, tuple[bool, str]] = {}
PROTOCOL_SECONDS: list[float] = []

# Desk-scale replica of the rate protocol: Additive family, Bernoulli noise,
# N = n^2 observations split by thinning, 10 trials per dimension.
PROTOCOL = ExperimentConfig(
    dims=((64, 64), (128, 128), (256, 256), (512, 512)),
    estimators=("tds", "borda"),
    family="additive",
    trials=10,
    seed=2024,
    split_mode="thinning",
)


@pytest.fixture(scope="session")
def protocol_rows():
    start = time.perf_counter()
    rows = run_experiment(PROTOCOL)
    PROTOCOL_SECONDS.append(time.perf_counter() - start)
    return rows


@pytest.fixture(scope="session")
def protocol_seconds(protocol_rows):
    return PROTOCOL_SECONDS[0]


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the end-of-run summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        CRITERIA[number] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
