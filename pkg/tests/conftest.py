# PASS/FAIL/SKIP lines recorded by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE = []


def record(criterion: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def record_skip(criterion: str, reason: str) -> None:
    line = f"SKIP  {criterion}: {reason}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
