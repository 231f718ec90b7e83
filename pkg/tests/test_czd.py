import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import periodic_field
from ellipticlab.czd import (
    DILATION,
    cz_decompose,
    dyadic_maximal,
    overlap_bound,
    verify_cz,
    whitney_cubes,
)
from ellipticlab.exponents import power_weight_indices
from ellipticlab.grid import PeriodicGrid
from ellipticlab.weights import WeightField

G2 = PeriodicGrid(2, 64)


def _alpha(f, grid, w, p, frac=0.3):
    gm = np.sqrt(np.sum(grid.gradient(f) ** 2, axis=0))
    avg = (np.sum(gm**p * w) / np.sum(w)) ** (1 / p)
    return max(frac * gm.max(), 1.5 * avg)


def test_dyadic_maximal_dominates_and_averages(rng):
    g = PeriodicGrid(2, 32)
    h = rng.uniform(0, 1, g.shape)
    w = rng.uniform(0.5, 2, g.shape)
    M = dyadic_maximal(h, w, g)
    assert np.all(M >= h * (1 - 1e-14))
    assert np.min(M) >= np.sum(h * w) / np.sum(w) - 1e-12


def test_whitney_cubes_are_disjoint_cover_and_admissible():
    g = G2
    omega = g.distance_to((0.1, 0.0)) < 0.2
    cubes = whitney_cubes(omega, g)
    cover = np.zeros(g.shape, int)
    F = np.argwhere(~omega) * g.h - 0.5 + g.h / 2
    for lo, b in cubes:
        cover[lo[0]:lo[0] + b, lo[1]:lo[1] + b] += 1
        center = np.array(lo) * g.h - 0.5 + b * g.h / 2
        d = np.abs(F - center)
        d = np.minimum(d, 1 - d)
        assert b * g.h <= np.min(np.hypot(*d.T)) + 1e-12
    assert np.array_equal(cover, omega.astype(int))
    with pytest.raises(ValueError, match="whole torus"):
        whitney_cubes(np.ones(g.shape, bool), g)


@pytest.mark.parametrize("n,N,wa,p", [(1, 256, 0, 2), (1, 256, 1, 3), (2, 64, 0, 1.5), (2, 64, 1, 2)])
def test_decomposition_properties(n, N, wa, p):
    g = PeriodicGrid(n, N)
    f = periodic_field(g, 7)
    w = WeightField.power(g, wa)
    dec = cz_decompose(f, w, p, _alpha(f, g, w.values, p), g)
    rep = verify_cz(dec, q=2)
    assert dec.parts
    assert rep.reconstruction < 1e-12
    assert rep.support_ok
    assert rep.overlap <= rep.overlap_bound
    for bp in dec.parts:
        assert bp.radius == pytest.approx(DILATION * math.sqrt(n) / 2 * bp.side)
    # outside the level set nothing changes
    assert np.array_equal(dec.g[~dec.omega], f[~dec.omega])


def test_single_cell_parts_vanish():
    g = G2
    f = periodic_field(g, 11)
    w = np.ones(g.shape)
    dec = cz_decompose(f, None, 2, _alpha(f, g, w, 2), g)
    singles = [bp for bp in dec.parts if bp.cells == 1]
    assert all(not np.any(bp.b) for bp in singles)


def test_empty_level_set_and_bad_alpha():
    g = PeriodicGrid(1, 64)
    f = periodic_field(g, 0)
    dec = cz_decompose(f, None, 2, 1e9, g)
    assert not dec.parts and np.array_equal(dec.g, f) and dec.overlap == 0
    with pytest.raises(ValueError):
        cz_decompose(f, None, 2, 0.0, g)


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.5, 2.0, 3.0]))
def test_scaling_covariance(seed, p):
    g = PeriodicGrid(1, 256)
    f = periodic_field(g, seed)
    a = _alpha(f, g, np.ones(g.shape), p)
    d1 = cz_decompose(f, None, p, a, g)
    d4 = cz_decompose(4 * f, None, p, 4 * a, g)
    assert [(bp.lo, bp.cells) for bp in d1.parts] == [(bp.lo, bp.cells) for bp in d4.parts]
    assert np.allclose(d4.g, 4 * d1.g, rtol=0, atol=1e-12 * np.max(np.abs(4 * f)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_ball_mass_decreases_with_height(seed):
    g = PeriodicGrid(1, 256)
    f = periodic_field(g, seed)
    a0 = _alpha(f, g, np.ones(g.shape), 2, frac=0.1)
    masses = []
    for k in (1, 1.5, 2, 3):
        dec = cz_decompose(f, None, 2, k * a0, g)
        masses.append(sum(np.sum(bp.mask) for bp in dec.parts))
    assert all(b <= a for a, b in zip(masses, masses[1:]))


def test_poincare_precondition_flag():
    g = G2
    f = periodic_field(g, 3)
    w = WeightField.power(g, 1)
    dec = cz_decompose(f, w, 2, _alpha(f, g, w.values, 2), g)
    idx = power_weight_indices(1, 2)  # n r_w = 3 > p, so p_w^* = 3p/(3 - p) = 6
    ok = verify_cz(dec, q=4, idx=idx)
    assert ok.q_in_precondition and not ok.notes and ok.poincare > 0
    bad = verify_cz(dec, q=6, idx=idx)
    assert not bad.q_in_precondition and "p_w^*" in bad.notes[0]
    d = bad.to_dict()
    assert set(bad.constants()) <= set(d)


def test_overlap_bound_values():
    assert overlap_bound(1) < overlap_bound(2)
    assert overlap_bound(2) == pytest.approx(3370, rel=0.01)
