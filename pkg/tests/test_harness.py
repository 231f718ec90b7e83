import json
import math

import numpy as np
import pytest

from conftest import laplacian
from ellipticlab.exponents import INF, CriticalExponents, Ext
from ellipticlab.grid import PeriodicGrid
from ellipticlab.harness import (
    LinearOp,
    NormBudget,
    NormEstimate,
    builder_from_config,
    classify_growth,
    config_hash,
    critical_exponents_from_config,
    estimate_norm,
    multiplier_op,
    norm_probes,
    parse_config,
    report_header,
    riesz_op,
    scaled_identity,
    semigroup_op,
    sweep,
    sweep_from_dict,
    witness_field,
    write_csv,
    write_json,
)
from ellipticlab.weights import WeightField


def test_scaled_identity_norm_exact():
    g = PeriodicGrid(2, 16)
    for p in (1.5, 2, 4):
        est = estimate_norm(scaled_identity(2.0), p, grid=g)
        assert est.value == pytest.approx(2.0, rel=1e-12)


def test_svd_oracle_at_p_two():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((32, 32))
    g = PeriodicGrid(1, 32)
    T = LinearOp(lambda f: M @ f, lambda v: M.T @ v)
    est = estimate_norm(T, 2, grid=g, budget=NormBudget(2000, 1e-12))
    sigma = np.linalg.svd(M, compute_uv=False)[0]
    assert est.value == pytest.approx(sigma, rel=1e-10)
    assert est.value <= sigma * (1 + 1e-12)


def test_estimate_is_a_lower_bound_and_monotone():
    g = PeriodicGrid(2, 32)
    k = np.fft.fftfreq(32) * 32
    m = 1.0 / (1.0 + 0.1 * (k[:, None] ** 2 + k[None, :] ** 2))
    est = estimate_norm(multiplier_op(g, m), 3, grid=g)
    assert est.value <= 1.0 + 1e-12
    assert est.value >= est.probe_value
    assert est.value == max(est.history)


def test_riesz_norms_on_laplacian():
    g, op, sg = laplacian(2, 32)
    T = riesz_op(op)
    assert estimate_norm(T, 2, grid=g).value == pytest.approx(1.0, abs=1e-6)
    # L^p norms of the discrete Riesz vector exceed the L^2 one away from p = 2
    assert estimate_norm(T, 4, grid=g).value > 1.2


def test_weighted_estimate_conjugates_by_weight():
    # ||I||_{L^p(w)} = 1 for every weight
    g = PeriodicGrid(2, 32)
    w = WeightField.power(g, 1)
    assert estimate_norm(scaled_identity(1.0), 3, w).value == pytest.approx(1.0)


def test_probe_corpus_shapes():
    g = PeriodicGrid(2, 32)
    probes = norm_probes(g, WeightField.power(g, 1).values, count=3)
    assert all(p.shape == g.shape and np.any(p) for p in probes)
    assert len(probes) > 3


def test_estimate_needs_p_and_grid():
    with pytest.raises(ValueError):
        estimate_norm(scaled_identity(1.0), 1, grid=PeriodicGrid(1, 8))
    with pytest.raises(ValueError):
        estimate_norm(scaled_identity(1.0), 2)


def test_probe_only_without_adjoint():
    g = PeriodicGrid(1, 16)
    est = estimate_norm(LinearOp(lambda f: 3 * f), 2, grid=g)
    assert est.method == "probe-corpus" and est.value == pytest.approx(3.0)


def test_semigroup_op_rejects_non_selfadjoint():
    from ellipticlab.grid import CoefficientField, assemble
    from ellipticlab.semigroup import SemigroupEvaluator

    g = PeriodicGrid(2, 8)
    c = CoefficientField.constant(g, np.array([[1.0, 0.3], [-0.3, 1.0]]))
    with pytest.raises(ValueError):
        semigroup_op(SemigroupEvaluator(assemble(c, g), "fourier"), 0.1)


@pytest.mark.parametrize("vals, verdict", [
    ([1.0, 1.6, 2.6], "growing"),
    ([1.0, 1.05, 1.08], "stable"),
    ([1.0, 1.2, 1.4], "boundary"),
    ([1.0, 2.0, 2.05], "boundary"),
    ([1.0, 1.6], "growing"),
    ([1.0], "boundary"),
])
def test_classify_growth(vals, verdict):
    assert classify_growth(vals) == verdict


def test_config_parsing_and_hash():
    text = "operator = meyers-kenig  # MK\nq = 4\np_list = 2, 6\nN_list = 32,64\n\n"
    cfg = parse_config(text)
    assert cfg["p_list"] == [2.0, 6.0] and cfg["N_list"] == [32, 64] and cfg["q"] == 4.0
    assert config_hash(cfg) == config_hash(parse_config(text))
    assert config_hash(cfg) != config_hash(parse_config(text.replace("q = 4", "q = 5")))
    ce = critical_exponents_from_config(cfg)
    assert ce.q_plus == 4 and ce.p_plus.is_inf
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("colour = red")
    with pytest.raises(ValueError, match="line 1"):
        parse_config("just words")


def test_builder_from_config_kinds():
    cfg = parse_config("operator = laplacian\nn = 1\ntransform = semigroup\nt = 0.01")
    T, g = builder_from_config(cfg)(16)
    assert g.n == 1 and T.adjoint is not None
    with pytest.raises(ValueError):
        builder_from_config(parse_config("transform = magic"))(16)


def test_small_sweep_round_trip(tmp_path):
    cfg = parse_config("operator = laplacian\np_list = 2\nalpha_list = 0, 3\nN_list = 16, 32, 64")
    ce = CriticalExponents.real_coefficients(2, INF)
    res = sweep(builder_from_config(cfg), [Ext(2)], [0.0, 3.0], [16, 32, 64], ce,
                NormBudget(iterations=20))
    assert res.verdicts[(Ext(2), 0.0)] == "inside-stable"
    assert res.predicted[(Ext(2), 0.0)] and not res.predicted[(Ext(2), 3.0)]
    assert res.inconsistencies() == []
    d = json.loads(json.dumps(res.to_dict(), default=str))
    back = sweep_from_dict(d)
    assert back.verdicts == res.verdicts
    assert back.values(Ext(2), 3.0) == pytest.approx(res.values(Ext(2), 3.0))
    write_csv(tmp_path / "s.csv", res.rows())
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("p,alpha")


def test_sweep_records_errors_per_cell():
    def build(N):
        if N == 32:
            raise RuntimeError("boom")
        g = PeriodicGrid(1, N)
        return scaled_identity(1.0), g

    res = sweep(build, [Ext(2)], [0.0], [16, 32], CriticalExponents.real_coefficients(1))
    assert "boom" in res.cells[(Ext(2), 0.0, 32)]
    assert res.values(Ext(2), 0.0)[1] is None


def test_alpha_sweep_detects_growth_past_ap():
    # Riesz on -Delta at p = 2 under |x|^alpha: bounded exactly for alpha < n(p-1) = 2;
    # the growth rate past it is N^{(alpha - 2)/2}, so it is only borderline near alpha = 2
    cfg = parse_config("operator = laplacian\np_list = 2\nalpha_list = -1, 1, 2, 4\nN_list = 32, 64, 128")
    res = sweep(builder_from_config(cfg), [Ext(2)], [-1.0, 1.0, 2.0, 4.0], [32, 64, 128],
                CriticalExponents.real_coefficients(2, INF), NormBudget(iterations=30))
    for a in (-1.0, 1.0):
        assert res.verdicts[(Ext(2), a)] == "inside-stable"
    for a in (2.0, 4.0):
        v = res.values(Ext(2), a)
        assert res.verdicts[(Ext(2), a)] != "inside-stable"
        assert v[0] < v[1] < v[2]
    assert res.verdicts[(Ext(2), 4.0)] == "outside-growing"
    assert res.inconsistencies() == []


def test_report_header_and_json(tmp_path):
    cfg = parse_config("")
    h = report_header(cfg)
    assert set(h) == {"version", "seed", "config_hash"}
    write_json(tmp_path / "r.json", {"x": np.float64(0.1), "e": Ext("3/2"), "inf": INF}, cfg)
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["x"] == 0.1 and d["config_hash"] == h["config_hash"]


def test_witness_field_is_cut_off():
    g = PeriodicGrid(2, 64)
    v = witness_field(g, 4.0)
    assert np.all(v[g.radius >= 0.125] == 0)
    assert np.max(np.abs(v)) > 0
