import numpy as np
import pytest

from loopsoup import CenteredBox, make_intensity, sample_soup


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_soup(rng):
    """A free-soup configuration in [-2, 2)^3 with enough loops to be interesting."""
    box = CenteredBox(2.0, 3)
    intensity = make_intensity(0.5, 3, box, "free", kmax=6)
    return sample_soup(intensity, 8, rng)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line for an acceptance criterion and print it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number: int, passed: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        lines.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
