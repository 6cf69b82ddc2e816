import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from photon_imager.model import GaussianPulse, InstrumentConfig

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def cfg():
    """Operating point with eta*S = B at unit reflectivity."""
    return InstrumentConfig(eta=0.35, S=2e-3, B=0.35 * 2e-3, N=1000, T_r=100e-9, T_p=270e-12)


@pytest.fixture
def pulse(cfg):
    return GaussianPulse(cfg.S, cfg.T_p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion at the end of the run

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """``record(criterion, title, checks)`` with ``checks`` a list of ``(label, ok, detail)``.

    Prints one line per check and one PASS/FAIL line for the criterion, and
    fails the test if any check failed.
    """
    store = request.config.stash[ACCEPTANCE]

    def record(criterion: int, title: str, checks: list) -> None:
        ok = all(c[1] for c in checks)
        store[criterion] = (title, ok, checks)
        for label, good, detail in checks:
            print(f"  [{'ok' if good else 'FAIL'}] {label}: {detail}")
        print(f"ACCEPTANCE {criterion} {'PASS' if ok else 'FAIL'}: {title}")
        failed = [f"{label} ({detail})" for label, good, detail in checks if not good]
        assert ok, "; ".join(failed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    ran = set()
    for reports in terminalreporter.stats.values():
        for rep in reports:
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid and getattr(rep, "when", "") == "call":
                ran.add(int(nodeid.rsplit("_", 1)[-1]))
    if not store and not ran:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ran | set(store)):
        if c in store:
            title, ok, checks = store[c]
            terminalreporter.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'}  {title}")
            for label, good, detail in checks:
                terminalreporter.write_line(f"    [{'ok' if good else 'FAIL'}] {label}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {c}: FAIL  (errored before recording a result)")
