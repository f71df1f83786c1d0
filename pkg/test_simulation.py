"""Testes dos geradores, métricas e driver Monte Carlo."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from data_model import ConfigError, RngStream
from screening import ScreenConfig, ScreenResult, pairs_of
from selection import SelectConfig, Term
from simulation import (
    CustomModel,
    SimModelSpec,
    discretize_even_columns,
    evaluate_screen,
    evaluate_select,
    gen_model,
    oracle_fit,
    parse_method,
    run_monte_carlo,
    sample_ar1_gaussian,
    square_transform_experiment,
)


def _screen(p, m_hat, a_hat, union=False) -> ScreenResult:
    union_set = sorted(set(m_hat) | set(a_hat)) if union else None
    return ScreenResult(
        omega_main=None,
        omega_inter=None,
        m_hat=sorted(m_hat),
        a_hat=sorted(a_hat),
        i_hat=pairs_of(union_set if union else a_hat),
        union_set=union_set,
        p=p,
    )


# ----------------------------------------------------------------------
# Geradores
# ----------------------------------------------------------------------
def test_ar1_independence_and_lag_two_correlation():
    """Testa ρ = 0 (independência) e corr(X_j, X_{j+2}) ≈ ρ²."""
    x = sample_ar1_gaussian(100_000, 3, 0.0, RngStream(1, 0))
    assert abs(np.corrcoef(x[:, 0], x[:, 1])[0, 1]) < 0.01

    x = sample_ar1_gaussian(100_000, 4, 0.5, RngStream(2, 0))
    assert np.corrcoef(x[:, 1], x[:, 3])[0, 1] == pytest.approx(0.25, abs=0.01)


@pytest.mark.parametrize("rho", [0.1, 0.5, 0.8])
def test_ar1_covariance_matches_toeplitz(rho):
    """Testa a covariância empírica contra ρ^|j-k|."""
    x = sample_ar1_gaussian(100_000, 10, rho, RngStream(3, 0))
    lags = np.abs(np.subtract.outer(np.arange(10), np.arange(10)))
    np.testing.assert_allclose(np.cov(x, rowvar=False), rho ** lags, atol=0.015)


def test_ar1_is_reproducible_and_checks_rho():
    """Testa fluxo idêntico bit a bit e |ρ| < 1."""
    a = sample_ar1_gaussian(50, 7, 0.3, RngStream(9, 4))
    b = sample_ar1_gaussian(50, 7, 0.3, RngStream(9, 4))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_ar1_gaussian(50, 7, 0.3, RngStream(9, 5)))
    with pytest.raises(ConfigError):
        sample_ar1_gaussian(10, 3, 1.0, RngStream(0, 0))


def test_discretize_even_columns():
    """Testa códigos 0/1/2 centrados nas colunas pares e colunas ímpares intactas."""
    x = np.array([[5.0, -1.0, 7.0], [6.0, 0.5, 8.0], [7.0, 2.0, 9.0]])
    out = discretize_even_columns(x)
    np.testing.assert_array_equal(out[:, 1], [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(out[:, [0, 2]], x[:, [0, 2]])

    edges = discretize_even_columns(np.array([[0.0, 0.0], [0.0, 1.5], [0.0, 1.6]]))
    np.testing.assert_allclose(edges[:, 1], np.array([1.0, 1.0, 2.0]) - 4.0 / 3.0)


def test_model_truths():
    """Testa os conjuntos verdadeiros dos Modelos 1, 4, 5 e 6."""
    _, _, truth = gen_model(SimModelSpec.for_model(1, p=30, test_n=5), 0)
    assert truth.main_set == {0, 1}
    assert truth.interaction_pairs == {(0, 1)}
    assert truth.active_vars == {0, 1}

    _, _, truth = gen_model(SimModelSpec.for_model(4, p=30, test_n=5), 0)
    assert truth.main_set == {11, 21}
    assert truth.indicator_main == {11}

    _, _, truth = gen_model(SimModelSpec.for_model(5, p=30, test_n=5), 0)
    assert truth.main_set == {0, 1}
    assert truth.active_vars == {0, 1, 2, 5, 6, 7, 8}
    assert truth.interaction_pairs == {(0, 1), (0, 2), (5, 6), (7, 8)}
    magnitudes = np.abs(truth.coef_main[truth.coef_main != 0])
    assert np.all((magnitudes >= 1) & (magnitudes <= 2))
    # Y6..Y10 repetem os suportes de Y1..Y5
    assert truth.response_support(0) == truth.response_support(5)
    assert truth.response_support(4) == ([], [(5, 6), (7, 8)])

    train, test, truth = gen_model(SimModelSpec.for_model(6, p=30, test_n=5), 0)
    assert train.q == 50 and test.n == 5
    assert truth.active_vars == {0, 1, 2, 3, 4, 8, 11, 12}
    np.testing.assert_allclose(np.asarray(train.x)[:, 1::2].mean(axis=0), 0.0, atol=1e-12)


def test_model_spec_validation():
    """Testa campos implicados pelo modelo e modelo desconhecido."""
    with pytest.raises(ConfigError):
        SimModelSpec.for_model(7)
    with pytest.raises(ConfigError):
        SimModelSpec.for_model(6, error_kind="gaussian_unit")
    with pytest.raises(ConfigError):
        SimModelSpec.for_model(4, p=20)
    spec = SimModelSpec.for_model(6)
    assert (spec.q, spec.error_kind, spec.discretize_even, spec.rho) == (50, "t5", True, 0.8)


def test_gen_model_is_deterministic():
    """Testa (spec, réplica) idênticos -> dados idênticos."""
    spec = SimModelSpec.for_model(5, p=25, test_n=20, master_seed=3)
    a_train, a_test, a_truth = gen_model(spec, 2)
    b_train, b_test, b_truth = gen_model(spec, 2)
    np.testing.assert_array_equal(a_train.x, b_train.x)
    np.testing.assert_array_equal(a_test.y, b_test.y)
    np.testing.assert_array_equal(a_truth.coef_main, b_truth.coef_main)
    c_train, _, _ = gen_model(spec, 3)
    assert not np.array_equal(a_train.x, c_train.x)


def test_zero_noise_custom_model_recovers_coefficients():
    """Testa W ≡ 0: regressão nas colunas verdadeiras recupera B."""
    custom = CustomModel.from_dict({
        "q": 1,
        "main": [{"var": 1, "coef": [2.0]}, {"var": 2, "coef": [2.0]}],
        "inter": [{"pair": [1, 2], "coef": [1.0]}],
        "noise_scale": 0.0,
    })
    spec = SimModelSpec.for_model("custom", custom=custom, p=10, test_n=5)
    train, _, _ = gen_model(spec, 0)
    x = np.asarray(train.x)
    columns = np.column_stack([x[:, 0], x[:, 1], x[:, 0] * x[:, 1]])
    coef, *_ = np.linalg.lstsq(columns, np.asarray(train.y)[:, 0], rcond=None)
    np.testing.assert_allclose(coef, [2.0, 2.0, 1.0], atol=1e-8)


# ----------------------------------------------------------------------
# Avaliação
# ----------------------------------------------------------------------
def test_evaluate_screen_flags():
    """Testa flags por alvo, All e monotonicidade em superconjuntos."""
    _, _, truth = gen_model(SimModelSpec.for_model(2, p=20, test_n=5), 0)

    full = evaluate_screen(_screen(20, [0, 5], [0, 1, 2]), truth)
    assert full.all and all(full.main.values()) and all(full.inter.values())

    partial = evaluate_screen(_screen(20, [0], [0, 1]), truth)
    assert partial.inter == {"X1X2": True, "X1X3": False}
    assert not partial.all

    bigger = evaluate_screen(_screen(20, [0, 4], [0, 1, 7]), truth)
    for name, flag in partial.inter.items():
        assert bigger.inter[name] >= flag

    union = evaluate_screen(_screen(20, [0], [1, 2], union=True), truth)
    assert union.all and union.variables == {"X1": True, "X2": True, "X3": True}

    empty_truth = gen_model(
        SimModelSpec.for_model("custom", custom=CustomModel.from_dict({"q": 1}), p=5, test_n=5), 0
    )[2]
    assert evaluate_screen(_screen(5, [], []), empty_truth).all


def test_evaluate_select_oracle_and_empty_model():
    """Testa PE = 0 sem ruído e FN de um modelo vazio no Modelo 3."""
    custom = CustomModel.from_dict({
        "q": 1,
        "main": [{"var": 1, "coef": [1.5]}],
        "inter": [{"pair": [2, 3], "coef": [2.0]}],
        "noise_scale": 0.0,
    })
    train, test, truth = gen_model(SimModelSpec.for_model("custom", custom=custom, p=8, test_n=500), 0)
    metrics = evaluate_select(oracle_fit(train, truth), truth, test)
    assert metrics.pe == pytest.approx(0.0, abs=1e-12)
    assert (metrics.fp_main, metrics.fp_int, metrics.fn_main, metrics.fn_int) == (0, 0, 0, 0)

    train, test, truth = gen_model(SimModelSpec.for_model(3, p=10, test_n=50), 0)
    mean = np.asarray(train.y).mean(axis=0)
    empty = SimpleNamespace(per_response_support=[[]], predict=lambda x: np.tile(mean, (x.shape[0], 1)))
    metrics = evaluate_select(empty, truth, test)
    assert (metrics.fn_int, metrics.fn_main, metrics.fp_main, metrics.fp_int) == (2, 0, 0, 0)

    extra = SimpleNamespace(per_response_support=[[Term.main(4), Term.inter(0, 1)]],
                            predict=empty.predict)
    metrics = evaluate_select(extra, truth, test)
    assert (metrics.fp_main, metrics.fn_int) == (1, 1)


def test_oracle_pe_approaches_noise_variance():
    """Testa PE do oráculo ≈ Var(W) = 1 com ruído gaussiano."""
    spec = SimModelSpec.for_model(1, p=10, test_n=10_000)
    train, test, truth = gen_model(spec, 0)
    metrics = evaluate_select(oracle_fit(train, truth), truth, test)
    assert metrics.pe == pytest.approx(1.0, abs=0.05)


def test_oracle_uses_indicator_for_model_4():
    """Testa que o oráculo do Modelo 4 usa 1(X12 >= 0)."""
    spec = SimModelSpec.for_model(4, p=25, test_n=5000)
    train, test, truth = gen_model(spec, 0)
    metrics = evaluate_select(oracle_fit(train, truth), truth, test)
    assert metrics.pe == pytest.approx(1.0, abs=0.1)


# ----------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------
def test_parse_method():
    """Testa nomes de método compostos."""
    assert parse_method("ipdc") == ("ipdc", None)
    assert parse_method("ipdc_glasso_lasso") == ("ipdc", "glasso_lasso")
    assert parse_method("sis2_max_glasso") == ("sis2_max", "glasso")
    assert parse_method("dcsis2_lasso") == ("dcsis2", "lasso")
    assert parse_method("oracle") == ("oracle", None)
    with pytest.raises(ConfigError):
        parse_method("siri")


def _small_spec(replicates: int = 2) -> SimModelSpec:
    return SimModelSpec.for_model(3, n=80, p=30, test_n=300, replicates=replicates, master_seed=11)


def test_single_replicate_has_zero_standard_errors():
    """Testa réplica única: agregados = registro, erros padrão 0."""
    report = run_monte_carlo(_small_spec(1), ["ipdc", "ipdc_lasso", "oracle"])
    table = report.table()
    se_columns = [c for c in table.columns if c.endswith("_se")]
    assert (table[se_columns].fillna(0.0) == 0.0).all().all()
    row = report.records[1].as_row()
    assert table.at["ipdc_lasso", "pe"] == pytest.approx(row["pe"])
    assert np.isnan(table.at["ipdc", "pe"])


def test_monte_carlo_is_identical_across_workers(tmp_path):
    """Testa relatório idêntico com 1 e 2 workers (JSON e CSV)."""
    methods = ["ipdc", "sis2_max", "ipdc_glasso_lasso"]
    serial = run_monte_carlo(_small_spec(), methods, n_jobs=1)
    parallel = run_monte_carlo(_small_spec(), methods, n_jobs=2)
    assert serial.to_dict() == parallel.to_dict()

    serial.to_csv(tmp_path / "a.csv")
    parallel.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    table = pd.read_csv(tmp_path / "a.csv", index_col=0)
    assert list(table.index) == methods


def test_monte_carlo_rejects_unknown_method():
    """Testa método desconhecido."""
    with pytest.raises(ConfigError):
        run_monte_carlo(_small_spec(), ["ipdc", "siri"])


# ----------------------------------------------------------------------
# Critérios de aceitação (lentos)
# ----------------------------------------------------------------------
@pytest.mark.slow
def test_square_transform_amplifies_interaction_signal():
    """Testa dcorr(X1², Y²) - dcorr(X1, Y) >= 0.05 em cada ρ."""
    for point in square_transform_experiment(n=200, p=50, rhos=(0.3, 0.5, 0.7), replicates=200):
        assert point.dcorr_square - point.dcorr_raw >= 0.05


@pytest.mark.slow
def test_model_3_screening_ipdc_versus_sis2():
    """Testa Modelo 3: IPDC retém tudo, SIS2 quase nunca."""
    spec = SimModelSpec.for_model(3, n=200, p=500, rho=0.5, replicates=50, test_n=10, master_seed=1)
    report = run_monte_carlo(spec, ["ipdc", "sis2_max"], n_jobs=-1)
    assert report.means.at["ipdc", "all"] >= 0.90
    assert report.means.at["sis2_max", "all"] <= 0.30


@pytest.mark.slow
def test_model_4_ipdc_keeps_interaction_with_weak_correlation():
    """Testa Modelo 4 (ρ = 0.1): IPDC retém X1X2; dcsis_square perde X12."""
    spec = SimModelSpec.for_model(4, n=200, p=500, rho=0.1, replicates=40, test_n=10, master_seed=5)
    report = run_monte_carlo(spec, ["ipdc", "dcsis2", "dcsis_square"], n_jobs=-1)
    assert report.means.at["ipdc", "inter:X1X2"] >= 0.95
    assert report.means.at["ipdc", "all"] >= 0.95
    assert report.means.at["dcsis_square", "main:X12"] <= 0.2
    assert report.means.at["dcsis_square", "all"] <= 0.1
    assert report.means.at["dcsis2", "inter:X1X2"] < report.means.at["ipdc", "inter:X1X2"]


@pytest.mark.slow
def test_model_4_dcsis2_misses_interaction_in_high_dimension():
    """Testa Modelo 4 (ρ = 0.1, p = 2000): DCSIS2 quase nunca retém X1X2."""
    spec = SimModelSpec.for_model(4, n=200, p=2000, rho=0.1, replicates=20, test_n=10, master_seed=6)
    report = run_monte_carlo(spec, ["dcsis2"], n_jobs=-1)
    assert report.means.at["dcsis2", "inter:X1X2"] <= 0.30


@pytest.mark.slow
def test_model_1_all_methods_retain_everything():
    """Testa Modelo 1: todos os métodos com All >= 0.95."""
    spec = SimModelSpec.for_model(1, n=200, p=500, rho=0.5, replicates=50, test_n=10, master_seed=2)
    report = run_monte_carlo(spec, ["ipdc", "sis2_max", "dcsis2"], n_jobs=-1)
    assert (report.means["all"] >= 0.95).all()


@pytest.mark.slow
def test_model_5_union_screening():
    """Testa Modelo 5 em modo união: IPDC retém X6..X9, SIS.max não."""
    spec = SimModelSpec.for_model(5, n=100, p=500, replicates=50, test_n=10, master_seed=3)
    report = run_monte_carlo(spec, ["ipdc", "sis2_max"], ScreenConfig(union_mode=True), n_jobs=-1)
    for name in ("X6", "X7", "X8", "X9"):
        assert report.means.at["ipdc", f"var:{name}"] >= 0.75
        assert report.means.at["sis2_max", f"var:{name}"] <= 0.40


@pytest.mark.slow
def test_model_3_selection_pipeline():
    """Testa Modelo 3: IPDC + Lasso com FN e PE baixos; oráculo perto de 1."""
    spec = SimModelSpec.for_model(3, n=200, p=500, rho=0.5, replicates=50, master_seed=4)
    report = run_monte_carlo(spec, ["ipdc_glasso_lasso", "oracle"], select_cfg=SelectConfig(), n_jobs=-1)
    fn = report.means.at["ipdc_glasso_lasso", "fn_main"] + report.means.at["ipdc_glasso_lasso", "fn_int"]
    assert fn <= 0.5
    assert report.means.at["ipdc_glasso_lasso", "pe"] <= 3.0
    assert 1.0 <= report.means.at["oracle", "pe"] <= 1.1
