import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion and fail on FAIL."""
    def _report(k: int, checks, seconds: float):
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{name}={'ok' if good else 'BAD'} ({info})" for name, good, info in checks)
        line = f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'} [{seconds:.1f}s] {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
