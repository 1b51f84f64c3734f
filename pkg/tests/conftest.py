CRITERIA = {}


def record(number, ok, detail):
    CRITERIA[number] = (bool(ok), detail)
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}: {detail}")
