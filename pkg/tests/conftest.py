import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> list of (status, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[str, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        status = "PASS" if all(s == "PASS" for s, _ in parts) else "FAIL"
        tr.write_line(f"CRITERION {n}: {status}")
        for s, detail in parts:
            tr.write_line(f"    [{s}] {detail}")
