import numpy as np
import pytest

from olinear.data import from_array
from olinear.synthetic import ar1, sinusoid, write_csv


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ar1_dataset():
    return from_array(ar1(3000, 3, 0.7, np.random.default_rng(3)), 0.7, 0.1)


@pytest.fixture
def sine_csv(tmp_path):
    values = sinusoid(600, 2, 24, np.random.default_rng(5), snr=10)
    path = tmp_path / "sine.csv"
    write_csv(path, values, ["a", "b"])
    return path


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record one pass/fail line per acceptance criterion; echoed now and in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(label: str, ok: bool | None, detail: str):
        status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        line = f"{label}: {status} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
