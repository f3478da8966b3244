from __future__ import annotations

# criterion number -> list of (ok, detail, seconds); filled by test_acceptance
ACCEPTANCE: dict[int, list] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[0] for p in parts)
        secs = sum(p[2] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(
            f"criterion {n:>2}: {'PASS' if ok else 'FAIL'} [{secs:.1f} s] {detail}")
