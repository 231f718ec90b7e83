import math

import numpy as np
import pytest

from conftest import laplacian, mk_operator, periodic_field
from ellipticlab.grid import CoefficientField, PeriodicGrid, assemble
from ellipticlab.semigroup import (
    SectorError,
    SemigroupEvaluator,
    apply_gradient_semigroup,
    apply_semigroup,
    gradient_semigroup_norm,
)

BOUND = (2 * math.e) ** -0.5  # sup_x sqrt(x) e^{-x}


def test_method_selection():
    assert laplacian(2, 32, "auto")[2].method == "spectral"
    assert laplacian(2, 128, "auto")[2].method == "fourier"
    assert mk_operator(128)[2].method == "krylov"
    with pytest.raises(ValueError):
        mk_operator(16, method="fourier")


@pytest.mark.parametrize("method", ["krylov", "expm", "spectral"])
def test_methods_agree_on_variable_coefficients(method):
    g, op, ref = mk_operator(16, method="spectral")
    sg = SemigroupEvaluator(op, method)
    f = periodic_field(g, 3)
    for z in (1e-4, 3e-3, 0.05, 0.02 * np.exp(0.7j)):
        a = sg.apply(z, f)
        b = ref.apply(z, f)
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(f)


def test_fourier_matches_spectral_on_laplacian(rng):
    g, op, four = laplacian(2, 32)
    spec = SemigroupEvaluator(op, "spectral")
    f = rng.standard_normal(g.shape)
    assert np.allclose(four.apply(0.01, f), spec.apply(0.01, f), atol=1e-12)


def test_semigroup_property(rng):
    g, op, sg = mk_operator(64)
    f = periodic_field(g, 1)
    two = sg.apply(0.003, sg.apply(0.002, f))
    one = sg.apply(0.005, f)
    assert np.linalg.norm(two - one) <= 1e-8 * np.linalg.norm(f)


def test_batched_sum_matches_separate_actions():
    g, op, sg = mk_operator(32, method="krylov")
    f = periodic_field(g, 2)
    zs, cs = [1e-3, 4e-3, 1e-2], [2.0, -1.0, 0.5]
    sep = sum(c * sg.apply(z, f) for z, c in zip(zs, cs))
    assert np.linalg.norm(sg.apply_sum(zs, cs, f) - sep) <= 1e-8 * np.linalg.norm(f)


def test_sector_is_enforced():
    g, op, sg = laplacian(2, 16)
    with pytest.raises(SectorError):
        sg.apply(np.exp(1j * (math.pi / 2 - 1e-4)), np.ones(g.shape))
    with pytest.raises(SectorError):
        SemigroupEvaluator(op, mu=math.pi / 2)
    assert np.array_equal(sg.apply(0, np.ones(g.shape)), np.ones(g.shape))


def test_complex_coefficients_narrow_the_sector():
    g = PeriodicGrid(2, 16)
    c = CoefficientField.constant(g, np.array([[1.0, 0.4j], [-0.4j, 1.0]]) * np.exp(0.3j))
    sg = SemigroupEvaluator(assemble(c, g), "fourier")
    assert sg.mu < math.pi / 2 - c.theta
    with pytest.raises(SectorError):
        sg.apply(np.exp(1j * (math.pi / 2 - c.theta)), np.ones(g.shape))


@pytest.mark.parametrize("t", [1e-4, 1e-3, 1e-2])
def test_gradient_bound_on_laplacian(t):
    # ||sqrt(t) grad e^{-tL}||^2 = sup_lam t lam e^{-2 t lam} exactly for -Delta_h
    g, op, sg = laplacian(2, 64)
    val = gradient_semigroup_norm(sg, t, iters=60)
    lam = np.unique(np.round(op.symbol().real.reshape(-1), 8))
    exact = math.sqrt(np.max(t * lam * np.exp(-2 * t * lam)))
    assert val <= BOUND + 1e-12
    # power iteration approaches the norm from below
    assert 0.99 * exact <= val <= exact + 1e-12


def test_wrappers():
    g, op, sg = laplacian(1, 64)
    f = np.sin(2 * np.pi * (g.centers[0] + 0.5))
    lam = 4 * math.sin(math.pi / 64) ** 2 / g.h**2
    assert np.allclose(apply_semigroup(sg, 0.01, f), math.exp(-0.01 * lam) * f)
    assert apply_gradient_semigroup(sg, 0.01, f).shape == (1, 64)
