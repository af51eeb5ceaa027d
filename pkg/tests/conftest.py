import numpy as np
import pytest

from ssmctl.cli import main
from ssmctl.core import TimeVaryingDiagonalSystem


def run_cli(argv) -> int:
    """Invoke the CLI in-process, normalizing SystemExit to an exit code."""
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_system(rng, length, n, m=1, p=1, a_limit=0.99) -> TimeVaryingDiagonalSystem:
    a_bars = rng.uniform(-a_limit, a_limit, size=(length, n))
    b_bars = rng.standard_normal((length, n, m))
    cs = rng.standard_normal((length, p, n))
    return TimeVaryingDiagonalSystem.from_arrays(a_bars, b_bars, cs)
