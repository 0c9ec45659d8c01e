import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lwganet.weights_io import WeightStore  # noqa: E402

ACCEPTANCE: list[tuple[str, bool, str]] = []


def random_store(specs, seed=0, scale=0.3):
    """Random weights with non-trivial BN statistics (positive variances)."""
    rng = np.random.default_rng(seed)
    items = []
    for s in specs:
        if s.role == "bn_var":
            a = rng.uniform(0.5, 1.5, s.shape)
        elif s.role == "bn_gamma":
            a = rng.uniform(0.5, 1.5, s.shape)
        else:
            a = rng.standard_normal(s.shape) * scale
        items.append((s.name, a.astype(np.float32)))
    return WeightStore(items)


@pytest.fixture
def acceptance_record():
    def record(label: str, ok: bool, detail: str = ""):
        ACCEPTANCE.append((label, ok, detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
