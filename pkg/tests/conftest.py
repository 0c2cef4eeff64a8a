import time

import pytest


class Criterion:
    """Collects the sub-checks of one acceptance criterion and its wall time."""

    def __init__(self, item, number, title, limit):
        self.item, self.number, self.title, self.limit = item, number, title, limit
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return ok

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check(f"runtime < {self.limit:g} s", elapsed < self.limit, f"{elapsed:.1f} s")
        failed = [f"{n} ({d})" if d else n for n, ok, d in self.checks if not ok]
        self.item.user_properties.append(("criterion", (self.number, self.title, elapsed, failed)))
        assert not failed, "failed sub-checks: " + "; ".join(failed)


@pytest.fixture
def criterion(request):
    def make(number, title, limit):
        return Criterion(request.node, number, title, limit)
    return make


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                number, title, elapsed, failed = props["criterion"]
                status = "PASS" if rep.passed else "FAIL"
                note = "" if rep.passed else "  <- " + "; ".join(failed)
                lines.append((number, f"criterion {number:>2} {status}  {title} "
                                      f"[{elapsed:.1f} s]{note}"))
            elif "test_acceptance" in rep.nodeid and rep.failed:
                lines.append((99, f"{rep.nodeid} FAIL (raised before completing)"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
