import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        n = int(m.group(1))
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        _results[n] = (m.group(2).replace("_", " "), report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        name, outcome, detail = _results[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {n} {verdict}: {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
