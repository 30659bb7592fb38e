import re
from collections import OrderedDict

_CRITERIA = OrderedDict()  # number -> list of (passed, nodeid, properties)
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _CRITERIA.setdefault(int(m.group(1)), []).append(
            (report.passed, report.nodeid, list(report.user_properties))
        )


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        runs = _CRITERIA[num]
        ok = all(passed for passed, _, _ in runs)
        detail = "; ".join(f"{k}={v}" for _, _, props in runs for k, v in props)
        tr.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
