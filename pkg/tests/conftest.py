import functools

import pytest

from srblab import models
from srblab.conditions import certified_cones, certify

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str):
    """Store one acceptance verdict for the end-of-run summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)


@functools.lru_cache(maxsize=None)
def _certificate(name):
    m = MODELS[name]()
    cu, cs = certified_cones(m)
    return m, cu, cs, certify(m, cu, cs)


MODELS = {
    "cat": models.cat_map,
    "linear3": lambda: models.linear(models.pitchfork_matrix()),
    "doubling": models.doubling,
    "pitchfork": lambda: models.pitchfork(rho=0.8),
}


@pytest.fixture(scope="session")
def certified():
    """``name -> (model, unstable cone, stable cone, certificate)``, computed once."""
    return _certificate


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
