import numpy as np
import pytest

from admeta.data import Dataset
from admeta.pipeline import run_pipeline

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

# datasets i < 200 of the 400-corpus are identical to a 200-corpus with the same seed
# (specs are drawn per index), so the larger run serves both
PIPELINE_N = 400
PIPELINE_SEED = 9


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_runtest_logreport(report):
    # a criterion test that errors before calling record() still gets a FAIL line
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.failed and name.startswith("test_criterion_"):
        c = int(name.split("_")[2])
        if c not in ACCEPTANCE or ACCEPTANCE[c][0]:
            ACCEPTANCE[c] = (False, f"{report.when} failed: {str(report.longrepr).splitlines()[-1]}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[c]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {c}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian(n, k, seed=0, name="g"):
    r = np.random.default_rng(seed)
    return Dataset(name, r.normal(size=(n, k)))


def with_outlier(n=60, k=3, seed=0, far=12.0):
    """Standard-normal inliers plus one far point at row 0."""
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, k))
    X[0] = far
    y = np.zeros(n, dtype=int)
    y[0] = 1
    return Dataset("outlier", X, y)


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline400")
    report = run_pipeline(out, PIPELINE_N, PIPELINE_SEED, "AUC")
    return out, report
