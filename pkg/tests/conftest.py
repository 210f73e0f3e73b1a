import contextlib

import pytest

_VERDICTS: dict[int, tuple[bool, str, str]] = {}


class Criteria:
    """Records one verdict per acceptance criterion; the last word wins."""

    @contextlib.contextmanager
    def check(self, number: int, title: str):
        details: list[str] = []
        try:
            yield details
        except BaseException as exc:
            msg = str(exc).strip().splitlines()
            _VERDICTS[number] = (False, title, msg[0] if msg else type(exc).__name__)
            raise
        _VERDICTS[number] = (True, title, "; ".join(details))


@pytest.fixture(scope="session")
def criteria():
    return Criteria()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, title, detail = _VERDICTS[n]
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
