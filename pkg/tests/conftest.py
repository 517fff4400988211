import pytest
from hypothesis import HealthCheck, settings

from okmp.ffield import M61, PrimeField
from okmp.rand import SeededRandom

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return SeededRandom(1234)


@pytest.fixture
def f7():
    return PrimeField(7, strict=False)


@pytest.fixture
def m61():
    return PrimeField(M61, strict=False)


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("OKMP_SEED", raising=False)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.failed or report.when == "call":
        previous = item.config._criteria.get(number)
        if previous is None or previous[1] == "PASS":
            status = "PASS" if report.passed else "FAIL"
            item.config._criteria[number] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        title, status, duration = criteria[number]
        terminalreporter.write_line(f"{status} criterion {number}: {title} ({duration:.2f} s)")
