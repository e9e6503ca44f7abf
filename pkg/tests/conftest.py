import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from finsler_lab.fixtures import REGISTRY, make_fixture  # noqa: E402

NON_BERWALD = {"b": [0.2, 0.0], "b_matrix": [[0.0, -0.3], [0.3, 0.0]]}


@pytest.fixture(scope="session")
def fixtures():
    """One instance of every shipped fixture, plus the non-Berwald Randers."""
    out = {k: make_fixture(k) for k in REGISTRY}
    out["randers-nb"] = make_fixture("randers", NON_BERWALD)
    return out


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok, detail, elapsed = results[n]
        terminalreporter.write_line(
            f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title} [{elapsed:.1f} s] {detail}")
