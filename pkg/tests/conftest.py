import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_results: dict[str, tuple[str, float, list]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        _results[name] = (outcome, report.duration, report.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_results, key=lambda n: int(n.split("_")[2])):
        outcome, duration, props = _results[name]
        detail = ", ".join(f"{k}={v}" for k, v in props)
        label = name[len("test_"):]
        terminalreporter.write_line(f"{outcome}  {label}  ({duration:.2f} s)  {detail}")
