import numpy as np
import pytest

from hsimaturity.pipeline import Scene
from hsimaturity.synthgen import SceneSpec, make_scene

# criterion id -> (name, passed, detail); printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid}. {name}: {detail}")


@pytest.fixture
def record_acceptance():
    def record(cid, name, ok, detail=""):
        ACCEPTANCE[cid] = (name, bool(ok), detail)
        print(f"[{'PASS' if ok else 'FAIL'}] {cid}. {name}: {detail}")
        return ok
    return record


def small_spec(**overrides):
    """Six disks on an 80x48 image with 60 bands: fast enough for unit tests."""
    base = dict(columns=3, rows=2, radius=8, width=80, height=48, bands=60, n_immature=3)
    base.update(overrides)
    return SceneSpec(**base)


def as_scene(synthetic, name="scene", labels=True):
    return Scene(name, synthetic.raw, synthetic.refs,
                 dict(synthetic.labels) if labels else None,
                 {rid: synthetic.spec.cultivar for rid in synthetic.labels})


@pytest.fixture(scope="session")
def small_train():
    return make_scene(small_spec(seed=11))


@pytest.fixture(scope="session")
def small_test():
    return make_scene(small_spec(seed=12))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
