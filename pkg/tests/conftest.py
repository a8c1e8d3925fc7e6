import sys

import numpy as np
import pytest

from ccsrl.simcore import (
    ControlVector,
    GridSpec,
    ReservoirModel,
    RockProps,
    Simulator,
    WellSpec,
    default_wells,
    generate_permeability,
)


def small_model(n=12, seed=3, std=1.0, wells=None, **kw):
    grid = GridSpec(nx=n, ny=n)
    perm = generate_permeability(seed, 4.0, std, 2.0, grid)
    return ReservoirModel(grid, RockProps(perm), wells=tuple(wells or default_wells(grid)), **kw)


def symmetric_model(n=10):
    """Homogeneous grid whose wells are mirror images about the vertical axis."""
    grid = GridSpec(nx=n, ny=n)
    perm = np.full(grid.shape, 80.0)
    wells = [
        WellSpec("P1", "producer", (1, 1)),
        WellSpec("P2", "producer", (n - 2, 1)),
        WellSpec("P3", "producer", (1, n - 2)),
        WellSpec("P4", "producer", (n - 2, n - 2)),
        WellSpec("I1", "injector", (n // 2 - 2, n // 2)),
        WellSpec("I2", "injector", (n - 1 - (n // 2 - 2), n // 2)),
    ]
    return ReservoirModel(grid, RockProps(perm), wells=tuple(wells))


@pytest.fixture(scope="session")
def model12():
    return small_model()


@pytest.fixture(scope="session")
def sim12(model12):
    return Simulator(model12)


def random_controls(model, rng):
    lo, hi = model.bounds.arrays(len(model.producers), len(model.injectors))
    return ControlVector.from_array(rng.uniform(lo, hi), len(model.producers))


def pytest_terminal_summary(terminalreporter):
    """One verdict line per acceptance criterion, when any ran."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n} {title}: {'PASS' if ok else 'FAIL'} ({detail})")
