import pytest

from mfgsde.coefficients import builtin
from mfgsde.ensemble import RandomVariable, ScenarioEnsemble, SigmaSet, TimeGrid
from mfgsde.gbrownian import GBrownianPaths
from mfgsde.rng import stream

SMOOTH = {
    "b": {"tanh": 0.8, "sin": 0.5, "shift": 0.1, "cross": 0.3},
    "h": {"tanh": 0.2, "sin": 0.1, "cross": 0.1},
    "g": {"tanh": 0.4, "sin": 0.3, "shift": 0.5, "cross": 0.2},
}
AFFINE = {
    "b": {"A": 0.3, "c": 0.1, "q": 0.2},
    "h": {"A": 0.1, "q": 0.05},
    "g": {"A": 0.2, "c": 0.3, "q": 0.1},
}

ACCEPTANCE = {}


def make_paths(n_paths=400, steps=32, scenarios=3, low=0.5, high=1.0, seed=0, horizon=1.0):
    ens = ScenarioEnsemble.generate(SigmaSet.interval(low, high), TimeGrid(0.0, horizon, steps),
                                    scenarios, n_paths, seed)
    return GBrownianPaths(ens)


def make_rv(paths, seed=1, mean=0.2, scale=0.5, d=1, name="tests.rv"):
    ens = paths.ensemble
    v = mean + scale * stream(seed, name).standard_normal((ens.n_paths, d))
    return RandomVariable.from_paths(v, ens.n_scenarios)


@pytest.fixture(scope="session")
def paths():
    return make_paths()


@pytest.fixture(scope="session")
def smooth():
    return builtin("smooth", SMOOTH)


@pytest.fixture(scope="session")
def affine():
    return builtin("affine", AFFINE)


@pytest.fixture(scope="session")
def zero():
    return builtin("zero")


@pytest.fixture
def rv(paths):
    return make_rv(paths)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    item_marker = getattr(report, "criterion", None)
    if item_marker is None:
        return
    number, title = item_marker
    if report.when == "call" or report.outcome != "passed":
        prev = ACCEPTANCE.get(number, (title, True))
        ACCEPTANCE[number] = (title, prev[1] and report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (int(m.args[0]), str(m.args[1]))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
