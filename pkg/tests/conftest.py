"""Prints one PASS/FAIL/SKIP line per acceptance criterion at the end of the run."""

_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "measured")
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _results[name] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, detail) in sorted(_results.items()):
        terminalreporter.write_line(f"{outcome:4s}  {name}  {detail}".rstrip())
