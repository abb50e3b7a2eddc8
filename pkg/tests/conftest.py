"""Shared test configuration: the acceptance criteria report."""

import re

CRITERIA: dict[str, tuple[bool, str, str]] = {}


def _line(label: str, ok: bool, title: str, detail: str) -> str:
    return f"criterion {label:>3} {'PASS' if ok else 'FAIL'}: {title} ({detail})"


def record(label, title: str, ok: bool, detail: str) -> bool:
    """Store and print one criterion outcome; returns ``ok`` for the caller to assert."""
    CRITERIA[str(label)] = (bool(ok), title, detail)
    print(_line(str(label), ok, title, detail))
    return ok


def _order(label: str):
    num, suffix = re.fullmatch(r"(\d+)(\w*)", label).groups()
    return int(num), suffix


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(CRITERIA, key=_order):
        ok, title, detail = CRITERIA[label]
        terminalreporter.write_line(_line(label, ok, title, detail))
