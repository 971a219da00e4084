import contextlib

CRITERIA = {}


@contextlib.contextmanager
def criterion(number: int, title: str, detail=None):
    """Record the outcome of one acceptance criterion for the summary lines.

    ``detail`` is a dict the body may fill with measured values.
    """
    detail = {} if detail is None else detail
    try:
        yield detail
    except BaseException:
        CRITERIA[number] = ("FAIL", title, detail)
        raise
    CRITERIA[number] = ("PASS", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        status, title, detail = CRITERIA[n]
        extra = ", ".join(f"{k}={v}" for k, v in detail.items())
        terminalreporter.write_line(f"[{status}] {n:2d}. {title}" + (f"  ({extra})" if extra else ""))
