import pytest

from poses_verify import estimator as est

ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def params():
    return est.ModelParams()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")
    config.stash[ACCEPTANCE] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    number, title = marker.args
    line = f"{'PASS' if rep.passed else 'FAIL'}  [{number}] {title} ({rep.duration:.2f} s)"
    item.config.stash[ACCEPTANCE].append((number, line + (f": {detail}" if detail else "")))


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash[ACCEPTANCE])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
