import numpy as np
import pytest

from nlschrodinger.config import RunConfig
from nlschrodinger.forms import build_form_system
from nlschrodinger.grid import Grid
from nlschrodinger.kernels import ProcessSpec


@pytest.fixture(scope="session")
def default_cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def spec():
    return ProcessSpec(alpha=1.2)


@pytest.fixture(scope="session")
def small_grid():
    # smallest box that holds the default supports, resolving beta = 2
    return Grid(8.0, 321)


@pytest.fixture(scope="session")
def small_system(default_cfg, small_grid):
    cfg = default_cfg
    return build_form_system(small_grid, cfg.build_spec(), cfg.build_mu(), cfg.build_F(), keep_literal=True)


@pytest.fixture(scope="session")
def default_system(default_cfg):
    cfg = default_cfg
    return build_form_system(cfg.build_grid(), cfg.build_spec(), cfg.build_mu(), cfg.build_F())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, ok: bool, message: str) -> bool:
        lines[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {message}"
        print(lines[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 10):
        terminalreporter.write_line(lines.get(k, f"criterion {k}: not run"))
