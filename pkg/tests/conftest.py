import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Register the acceptance criterion a test checks.

    Returns a dict the test may fill with a ``detail`` string; the outcome is
    attached after the call and summarised as one PASS/FAIL line per criterion.
    """
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    def register(number: int, title: str) -> dict:
        entry = {"title": title, "detail": "", "nodeid": request.node.nodeid, "ok": None}
        results[number] = entry
        return entry

    return register


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    for entry in item.config.stash.get(_ACCEPTANCE, {}).values():
        if entry["nodeid"] == item.nodeid:
            entry["ok"] = report.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        entry = results[number]
        status = "PASS" if entry["ok"] else "FAIL"
        line = f"[{status}] {number}. {entry['title']}"
        terminalreporter.write_line(f"{line} -- {entry['detail']}" if entry["detail"] else line)
