import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from edgewise.graph import Graph  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
FIXTURE = ROOT / "fixtures" / "toy"

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def fixture_dir():
    return FIXTURE


def random_graph(rng, n, p=0.35, d=4, q=0):
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    feats = rng.normal(size=(n, d))
    efeats = rng.random((len(pairs), q)) if q else None
    return Graph.from_edges([f"v{k}" for k in range(n)], pairs, feats, efeats)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
