import math
import warnings

import numpy as np
import pytest

from conftest import laplacian, mk_operator, periodic_field
from ellipticlab.singular import (
    ConstantModeWarning,
    RootSolver,
    TimeQuadrature,
    big_g_function,
    commutator,
    commutator_recursive,
    fourier_riesz_multiplier,
    g_function,
    h_norm,
    inv_sqrt_apply,
    kato_defect,
    project_mean_zero,
    riesz_apply,
    riesz_spectral,
    sqrt_apply,
    t_l_operator,
    vertical_family,
)


def test_time_quadrature_nodes():
    tq = TimeQuadrature(1e-6, 16.0, 10)
    t, w = tq.nodes()
    assert t[0] == 1e-6 and t[-1] >= 16.0
    assert np.allclose(np.diff(np.log(t)), tq.step)
    assert tq.refined().size > tq.size
    # tail below eps of int t^a du is eps^a / a in the continuum
    assert tq.lower_tail(0.5) == pytest.approx(2 * 1e-3, rel=0.2)
    with pytest.raises(ValueError):
        TimeQuadrature(1.0, 0.5)


def test_constant_mode_warning():
    f = np.ones(8) + np.arange(8)
    with pytest.warns(ConstantModeWarning):
        f0, mean = project_mean_zero(f)
    assert mean == pytest.approx(4.5) and abs(f0.mean()) < 1e-15
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        project_mean_zero(f - f.mean())


def test_root_solver_scalar_approximates_inverse_sqrt():
    g, op, sg = mk_operator(32)
    rs = RootSolver(op, 16)
    lo, hi = rs.bounds
    lam = np.logspace(math.log10(lo), math.log10(hi), 200)
    assert np.max(np.abs(rs.scalar(lam) * np.sqrt(lam) - 1)) < 1e-6


@pytest.mark.parametrize("method", ["time", "root"])
def test_inverse_sqrt_methods_on_laplacian(method, rng):
    g, op, sg = laplacian(2, 32)
    f = rng.standard_normal(g.shape)
    f -= f.mean()
    ref = riesz_spectral(sg, f)
    out = riesz_apply(sg, f, method=method).value
    assert np.linalg.norm(out - ref) <= 1e-5 * np.linalg.norm(f)


def test_riesz_multiplier_matches_spectral(rng):
    g, op, sg = laplacian(2, 32)
    f = rng.standard_normal(g.shape)
    f -= f.mean()
    assert np.allclose(fourier_riesz_multiplier(g, f), riesz_spectral(sg, f), atol=1e-10)


def test_sqrt_squares_to_operator():
    g, op, sg = mk_operator(32, method="krylov")
    f = periodic_field(g, 0)
    f -= f.mean()
    rs = RootSolver(op, 24)
    twice = sqrt_apply(sg, sqrt_apply(sg, f, root=rs).value, root=rs).value
    assert np.linalg.norm(twice - op.apply(f)) <= 1e-6 * np.linalg.norm(op.apply(f))


def test_kato_energy_identity_on_meyers_kenig():
    # <A grad L^{-1/2} f, grad L^{-1/2} f> = ||f||^2 for every f of mean zero
    g, op, sg = mk_operator(32, method="krylov")
    for seed in range(3):
        f = periodic_field(g, seed)
        f -= f.mean()
        assert kato_defect(sg, f, root=RootSolver(op, 24)) < 1e-6


def test_inverse_sqrt_output_has_mean_zero(rng):
    g, op, sg = mk_operator(16, method="krylov")
    with pytest.warns(ConstantModeWarning):
        r = inv_sqrt_apply(sg, rng.standard_normal(g.shape) + 2.0)
    assert abs(r.value.mean()) < 1e-12 and r.meta["method"] == "root"


@pytest.mark.parametrize("fn", [g_function, big_g_function])
def test_square_functions_on_single_mode(fn):
    # for an eigenmode both square functions have L^2 norm ||f|| / sqrt(2)
    g, op, sg = laplacian(1, 64)
    f = np.cos(2 * np.pi * 3 * (g.centers[0] + 0.5))
    r = fn(sg, f)
    ratio = g.lp_norm(r.value, 2) / g.lp_norm(f, 2)
    assert ratio == pytest.approx(2**-0.5, rel=1e-3)
    assert not r.flagged


def test_t_l_is_adjoint_of_vertical_family(rng):
    # <T_L F, f> = int <F(t), (tL)^{1/2} e^{-tL} f> dt/t on the same nodes
    g, op, sg = laplacian(2, 16)
    tq = TimeQuadrature(1e-6 * g.h**2, 16.0, 8)
    f = rng.standard_normal(g.shape)
    F = rng.standard_normal((tq.size,) + g.shape)
    lhs = np.vdot(t_l_operator(sg, F, tq), f)
    _, w = tq.nodes()
    V = vertical_family(sg, f, tq)
    rhs = sum(wk * np.vdot(Fk, Vk) for wk, Fk, Vk in zip(w, F, V))
    assert lhs.real == pytest.approx(rhs.real, rel=1e-10)
    with pytest.raises(ValueError):
        t_l_operator(sg, F[:-1], tq)


def test_h_norm_of_vertical_family_is_g_function(rng):
    g, op, sg = laplacian(2, 16)
    tq = TimeQuadrature.default(g, 12)
    f = rng.standard_normal(g.shape)
    assert np.allclose(h_norm(vertical_family(sg, f, tq), tq), g_function(sg, f, tq).value)


def test_commutator_forms_agree(rng):
    g, op, sg = laplacian(1, 64)
    T = lambda u: sg.apply(1e-3, u)  # noqa: E731
    b = np.sin(2 * np.pi * g.centers[0])
    f = rng.standard_normal(g.shape)
    for k in range(4):
        assert np.allclose(commutator(T, b, k, f), commutator_recursive(T, b, k, f), atol=1e-12)
    with pytest.raises(ValueError):
        commutator(T, b, -1, f)


def test_first_commutator_of_multiplication_vanishes(rng):
    f, b = rng.standard_normal(32), rng.standard_normal(32)
    T = lambda u: 3.0 * u  # noqa: E731
    assert np.allclose(commutator(T, b, 1, f), 0)
