def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines, which pytest would otherwise capture."""
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
