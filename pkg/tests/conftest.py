"""Shared fixtures: one periodic cell solve and one defect-window solve reused
across the corrector/homogenization tests (session scope keeps them to a
single solve each)."""

import numpy as np
import pytest

from perfhom import corrector as C
from perfhom import geometry as G


def disk(cx, cy, r):
    return G.HoleShape("disk", (cx, cy), (r, r))


@pytest.fixture(scope="session")
def pattern():
    return disk(0.5, 0.5, 0.25)


@pytest.fixture(scope="session")
def enlarged_field(pattern):
    fam = G.DefectFamily(overrides={(0, 0): disk(0.5, 0.5, 0.32)})
    return G.PerforationField(pattern, fam)


@pytest.fixture(scope="session")
def per64(pattern):
    return C.solve_periodic_corrector(pattern, 64)


@pytest.fixture(scope="session")
def defect64(enlarged_field, per64):
    return C.solve_defect_corrector(enlarged_field, per64, r_tr=2, n=64)
