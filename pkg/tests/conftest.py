import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and rep.when == "call":
        rep.user_properties.append(("criterion", mark.args))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for status in ("passed", "failed"):
        for rep in terminalreporter.stats.get(status, []):
            for key, val in getattr(rep, "user_properties", []):
                if key == "criterion":
                    lines.append((val[0], "PASS" if status == "passed" else "FAIL", val[1]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, verdict, text in sorted(lines):
            terminalreporter.write_line(f"[{verdict}] criterion {num}: {text}")
