_criteria: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        outcome = "PASS" if call.excinfo is None else "FAIL"
        _criteria.setdefault(marker.args[0], []).append((item.name, outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        status = "PASS" if all(o == "PASS" for _, o in results) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}")
        if len(results) > 1:
            for name, outcome in results:
                terminalreporter.write_line(f"    {outcome}  {name}")
