import math

import numpy as np
import pytest

from conftest import laplacian, mk_operator, periodic_field
from ellipticlab.funcalc import (
    Contour,
    DecayError,
    EtaTable,
    HoloSymbol,
    QuadratureError,
    approximation_family,
    approximation_multiplier,
    contour_for,
    eta_kernel,
    extended_corpus,
    holo_calc,
    holo_spectral,
    psi_asymptotic,
    psi_kernel,
    psi_kernel_quadrature,
    symbol_corpus,
)


def test_psi_closed_form_matches_quadrature():
    z = np.array([0.1, 1.0, 5.0, 2.0 * np.exp(0.5j)])
    assert np.allclose(psi_kernel(z), psi_kernel_quadrature(z, nodes=40000), rtol=1e-6)


def test_psi_large_argument_expansion():
    for z in (20.0, 40.0):
        assert abs(psi_kernel(z) / psi_asymptotic(z) - 1) < 3 / z**3


def test_corpus_decay_constants_finite():
    for name, phi in extended_corpus().items():
        assert 0 < phi.decay_constant() < math.inf, name


def test_misdeclared_decay_is_rejected():
    phi = HoloSymbol(lambda z: z / (1 + z) ** 2, 2.0, name="too fast")
    with pytest.raises(DecayError, match="too fast"):
        phi.decay_constant()


def test_symbol_algebra():
    a, b = symbol_corpus()["z/(1+z)^2"], symbol_corpus()["z exp(-z)"]
    c = a * b
    assert c.decay_s == 2.0
    z = np.array([0.3, 2.0 + 1j])
    assert np.allclose(c(z), a(z) * b(z))
    assert np.allclose((a + b)(z), a(z) + b(z))
    assert (a + b).decay_s == 1.0


def test_contour_validation():
    with pytest.raises(ValueError):
        Contour(0.5, 0.4, 1.0, 1e-6, 1.0)
    with pytest.raises(ValueError):
        Contour(0.1, 0.4, 1.0, 1.0, 1e-6)


def test_eta_table_realizes_symbol_on_spectrum():
    g, op, sg = laplacian(2, 32)
    for phi in symbol_corpus().values():
        tab = EtaTable.build(phi, contour_for(sg, phi))
        lam = np.logspace(math.log10(op.spectral_bounds()[0]), math.log10(op.spectral_bounds()[1]), 50)
        assert np.max(np.abs(tab.scalar(lam) - phi(lam))) < 1e-7 * phi.sup_norm


def test_eta_quadrature_self_check_fires():
    g, op, sg = laplacian(2, 32)
    phi = symbol_corpus()["z/(1+z)^2"]
    coarse = contour_for(sg, phi, nodes_per_decade=2)
    z = coarse.big_gamma(1)[0][::10]
    with pytest.raises(QuadratureError):
        eta_kernel(phi, coarse, z)


def test_holo_calc_on_laplacian(rng):
    g, op, sg = laplacian(2, 32)
    f = rng.standard_normal(g.shape)
    for phi in symbol_corpus().values():
        err = np.linalg.norm(holo_calc(sg, phi, f=f) - holo_spectral(sg, phi, f))
        assert err <= 1e-7 * phi.sup_norm * np.linalg.norm(f)


def test_holo_calc_krylov_on_meyers_kenig():
    g, op, ref = mk_operator(16, method="spectral")
    from ellipticlab.semigroup import SemigroupEvaluator

    sg = SemigroupEvaluator(op, "krylov")
    f = periodic_field(g, 5)
    phi = symbol_corpus()["z^2/(1+z)^4"]
    out = holo_calc(sg, phi, f=f)
    assert np.linalg.norm(out - holo_spectral(ref, phi, f)) <= 1e-6 * phi.sup_norm * np.linalg.norm(f)


def test_holo_calc_ignores_constant_mode(rng):
    g, op, sg = laplacian(1, 64)
    f = rng.standard_normal(g.shape)
    phi = symbol_corpus()["z exp(-z)"]
    assert np.allclose(holo_calc(sg, phi, f=f + 7.0), holo_calc(sg, phi, f=f), atol=1e-12)


def test_approximation_family_matches_multiplier(rng):
    g, op, sg = laplacian(2, 32)
    f = rng.standard_normal(g.shape)
    for m in (1, 2, 3):
        a = approximation_family(sg, 0.05, m, f)
        b = sg.apply_multiplier(approximation_multiplier(0.05, m), f)
        assert np.allclose(a, b, atol=1e-10)
    assert np.allclose(approximation_family(sg, 0.05, 1, f), sg.apply(0.0025, f))
    with pytest.raises(ValueError):
        approximation_family(sg, 0.05, 0, f)
