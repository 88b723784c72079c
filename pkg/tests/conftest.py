import numpy as np
import pytest

from isingrbm.rbm import RbmParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_params():
    # 2 visible x 2 hidden, hand-checkable
    return RbmParams([[1.0, -1.0], [0.5, 2.0]], [0.5, -0.5], [0.0, 1.0])


def random_params(m, n, rng, scale=1.0, bias_scale=0.5):
    return RbmParams(scale * rng.standard_normal((m, n)), bias_scale * rng.standard_normal(m),
                     bias_scale * rng.standard_normal(n))


ACCEPTANCE_LINES = []


def acceptance_line(number, name, status, detail=""):
    line = f"[{status}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
