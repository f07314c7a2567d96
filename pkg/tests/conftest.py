"""Shared pytest wiring: one-line verdicts for the acceptance suite."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts: dict[str, str] = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            outcome = "PASS" if key == "passed" else "FAIL"
            if verdicts.get(name) != "FAIL":
                verdicts[name] = outcome
    if not verdicts:
        return
    mod = sys.modules.get("test_acceptance")
    labels = getattr(mod, "CRITERIA", {}) if mod else {}
    notes = getattr(mod, "NOTES", {}) if mod else {}
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(verdicts):
        line = f"{verdicts[name]}  {labels.get(name, name)}"
        if name in notes:
            line += f"  [{notes[name]}]"
        terminalreporter.write_line(line)
