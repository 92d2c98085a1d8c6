import numpy as np
import pytest

from qvlab.generators import ProcessSpec, ZeroQVSpec, gen_dirichlet
from qvlab.laws import DiscreteLaw, FixedTimeJump, JumpModel, PoissonJumps
from qvlab.paths import TimeGrid

# pass/fail lines collected by the acceptance tests, echoed in the summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid():
    return TimeGrid(1.0, 2**12)


def bm_cp(n_steps=2**12, fixed=False, zero_qv=False):
    law = DiscreteLaw(((0.5, 0.5), (-0.5, 0.5)))
    fixed_times = ()
    if fixed:
        fixed_times = (FixedTimeJump(n_steps // 2, DiscreteLaw(((0.3, 0.5), (-0.3, 0.5))), 0.5),)
    zq = ZeroQVSpec("fbm", 0.75, 0.3) if zero_qv else ZeroQVSpec()
    return ProcessSpec(TimeGrid(1.0, n_steps), 1.0, jumps=JumpModel(PoissonJumps(5.0, law), fixed_times), zero_qv=zq)


@pytest.fixture
def sample():
    return gen_dirichlet(bm_cp(fixed=True, zero_qv=True), 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_raw(n_steps=2**12, seeds=4, depths=(8, 9, 10), transform="square"):
    """The builtin desk scenario shrunk to test size."""
    from qvlab.config import builtin_raw, set_in

    raw = builtin_raw("desk")
    for key, val in (("grid.n_steps", n_steps), ("experiment.seeds", seeds), ("experiment.depths", list(depths)),
                     ("experiment.transform", transform),
                     ("experiment.schemes", [{"name": "dyadic", "depth": depths[-1]},
                                             {"name": "hitting", "epsilon": 0.1, "cap": 0.05}]),
                     ("family.n_range", {"min": 2, "max": 6})):
        raw = set_in(raw, key, val)
    return raw
