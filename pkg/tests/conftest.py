from __future__ import annotations


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, taken from the test reports."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            for key, val in getattr(rep, "user_properties", ()):
                if key == "criterion" and rep.when == "call":
                    rows.append((val[0], val[1], rep.outcome))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, outcome in sorted(rows):
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] criterion {num}: {title}")
