import numpy as np
import pytest

from vvad.landmarks import load_mean_face


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mean_face():
    return load_mean_face()


def random_pose(rng, scale=1.0):
    """Random proper rotation and translation."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    return R, rng.normal(scale=scale, size=3)


# acceptance summary: one line per criterion, printed after the run
ACCEPTANCE = {}


class Criterion:
    def __init__(self, number):
        self.number = number
        self.details = []

    def check(self, ok, detail):
        self.details.append((bool(ok), detail))
        assert ok, detail


@pytest.fixture
def criterion(request):
    number = request.node.get_closest_marker("criterion").args[0]
    c = Criterion(number)
    yield c
    outcome = getattr(request.node, "rep_call", None)
    passed = outcome is not None and outcome.passed
    detail = "; ".join(d for _, d in c.details) or "see traceback"
    prev = ACCEPTANCE.get(number)
    ok = passed and (prev is None or prev[0])
    ACCEPTANCE[number] = (ok, (prev[1] + "; " if prev else "") + detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
