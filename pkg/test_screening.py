"""Testes da etapa de triagem."""

from __future__ import annotations

import json

import numpy as np
import pytest

from data_model import ConfigError, DataError, validate_dataset
from screening import (
    ScreenConfig,
    ScreenResult,
    auto_size,
    compute_utilities,
    pairs_of,
    run_screen,
    select_by_threshold,
    select_top_k,
    sis_utilities,
)
from simulation import SimModelSpec, gen_model


def _model3(seed: int = 0, p: int = 100):
    spec = SimModelSpec.for_model(3, p=p, test_n=10, master_seed=seed)
    train, _, truth = gen_model(spec, 0)
    return train, truth


def test_auto_size():
    """Testa ⌊n / log n⌋."""
    assert auto_size(200) == 37
    assert auto_size(100) == 21


def test_select_top_k_ties_prefer_lowest_index():
    """Testa desempate pelo menor índice e saída ordenada."""
    omegas = [1.0, 3.0, 3.0, 2.0]
    assert select_top_k(omegas, 1) == [1]
    assert select_top_k(omegas, 2) == [1, 2]
    assert select_top_k(omegas, 3) == [1, 2, 3]
    assert select_top_k(omegas, 10) == [0, 1, 2, 3]
    assert select_top_k(omegas, 2, exclude=[1]) == [2, 3]


def test_select_by_threshold():
    """Testa τ = 0 (todos) e exclusão de degenerados."""
    omegas = [0.0, 0.4, 0.2]
    assert select_by_threshold(omegas, 0.0) == [0, 1, 2]
    assert select_by_threshold(omegas, 0.0, exclude=[0]) == [1, 2]
    assert select_by_threshold(omegas, 0.3) == [1]
    with pytest.raises(ConfigError):
        select_by_threshold(omegas, -1.0)


def test_pairs_closure():
    """Testa o fecho de pares k < l."""
    assert pairs_of([3, 1, 2]) == [(1, 2), (1, 3), (2, 3)]
    assert pairs_of([5]) == []
    assert pairs_of([]) == []


def test_config_reports_all_problems():
    """Testa que a validação lista todos os problemas de uma vez."""
    cfg = ScreenConfig(rule="threshold", baseline="nope", sis_aggregate="median")
    with pytest.raises(ConfigError) as excinfo:
        cfg.validate()
    assert len(excinfo.value.problems) >= 3


def test_ipdc_recovers_heredity_violating_interactions():
    """Testa que IPDC mantém X1X2 e X1X3 no Modelo 3."""
    train, truth = _model3()
    result = run_screen(train, ScreenConfig())
    assert len(result.m_hat) == auto_size(train.n)
    assert len(result.a_hat) == auto_size(train.n)
    assert truth.interaction_pairs <= set(result.i_hat)
    assert result.i_hat == pairs_of(result.a_hat)


def test_utilities_do_not_depend_on_workers():
    """Testa resultado bit a bit idêntico com 1 e 2 workers."""
    train, _ = _model3(p=60)
    main_1, inter_1 = compute_utilities(train, n_jobs=1)
    main_2, inter_2 = compute_utilities(train, n_jobs=2)
    np.testing.assert_array_equal(main_1, main_2)
    np.testing.assert_array_equal(inter_1, inter_2)


def test_larger_k_never_drops_indices():
    """Testa monotonia: aumentar k (ou baixar τ) só acrescenta índices."""
    train, _ = _model3(p=80)
    previous = None
    for k in range(1, 40):
        result = run_screen(train, ScreenConfig(d_main=k, d_inter=k))
        if previous is not None:
            assert set(previous.m_hat) <= set(result.m_hat)
            assert set(previous.a_hat) <= set(result.a_hat)
            assert set(previous.i_hat) <= set(result.i_hat)
        previous = result

    omega_main, omega_inter = compute_utilities(train)
    previous = None
    for level in (0.95, 0.75, 0.5, 0.25, 0.0):
        cfg = ScreenConfig(
            rule="threshold",
            tau1=float(np.quantile(omega_main, level)),
            tau2=float(np.quantile(omega_inter, level)),
        )
        result = run_screen(train, cfg)
        if previous is not None:
            assert set(previous.m_hat) <= set(result.m_hat)
            assert set(previous.a_hat) <= set(result.a_hat)
        previous = result


def test_utilities_invariant_to_row_permutation():
    """Testa que permutar as observações não altera ω̂ e ω̂*."""
    train, _ = _model3(p=40)
    order = np.random.default_rng(11).permutation(train.n)
    shuffled = validate_dataset(train.x[order], train.y[order])
    main, inter = compute_utilities(train)
    main_shuffled, inter_shuffled = compute_utilities(shuffled)
    np.testing.assert_allclose(main_shuffled, main, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(inter_shuffled, inter, rtol=1e-12, atol=1e-12)


def test_column_scaling_keeps_selected_sets():
    """Testa que multiplicar uma coluna por 7.3 não muda M̂ nem Â."""
    train, _ = _model3(p=80)
    x = np.array(train.x, copy=True)
    x[:, 5] *= 7.3
    scaled = validate_dataset(x, train.y)
    original = run_screen(train, ScreenConfig())
    rescaled = run_screen(scaled, ScreenConfig())
    assert rescaled.m_hat == original.m_hat
    assert rescaled.a_hat == original.a_hat
    np.testing.assert_allclose(compute_utilities(scaled)[0][5], compute_utilities(train)[0][5], rtol=1e-10)


def test_union_mode_builds_pairs_of_union():
    """Testa o modo união: Î = pares de M̂ ∪ Â."""
    train, _ = _model3(p=60)
    result = run_screen(train, ScreenConfig(d_main=5, d_inter=4, union_mode=True))
    union = sorted(set(result.m_hat) | set(result.a_hat))
    assert result.union_set == union
    assert result.i_hat == pairs_of(union)
    assert result.main_candidates == union


def test_single_ranking_baselines():
    """Testa SIS2/DCSIS2: um único ranking, Î dos retidos, sem ω̂*."""
    train, _ = _model3(p=60)
    for baseline in ("sis2", "dcsis2"):
        result = run_screen(train, ScreenConfig(baseline=baseline, d_main=6))
        assert result.omega_inter is None
        assert result.m_hat == result.a_hat
        assert len(result.m_hat) == 6
        assert "omega_inter" not in result.to_dict()

    result = run_screen(train, ScreenConfig(baseline="sis2", d_main=6, d_inter=4, union_mode=True))
    assert len(result.union_set) == 10


def test_dcsis_square_ranks_squared_utility_only():
    """Testa DCSIS-square: só ω̂*, mesmo conjunto para M̂ e Â."""
    train, _ = _model3(p=60)
    result = run_screen(train, ScreenConfig(baseline="dcsis_square", d_inter=7))
    assert result.omega_main is None
    assert result.m_hat == result.a_hat
    assert len(result.a_hat) == 7


def test_degenerate_column_is_flagged_and_skipped():
    """Testa coluna constante: ω̂ = 0, sinalizada e nunca selecionada."""
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 6))
    x[:, 2] = 1.5
    data = validate_dataset(x, x[:, 0] + rng.normal(size=50))
    result = run_screen(data, ScreenConfig(rule="threshold", tau1=0.0, tau2=0.0))
    assert 2 in result.degenerate
    assert result.omega_main[2] == 0.0
    assert 2 not in result.m_hat and 2 not in result.a_hat


def test_dcorr2_reported_alongside_omega():
    """Testa dcorr² = ω̂ / √dcov²(ỹ, ỹ): mesma ordenação e valores em [0, 1]."""
    train, _ = _model3(p=30)
    result = run_screen(train, ScreenConfig(d_main=3, d_inter=3))
    assert np.all((result.dcorr2_main >= 0) & (result.dcorr2_main <= 1 + 1e-10))
    assert list(np.argsort(result.dcorr2_main)) == list(np.argsort(result.omega_main))


def test_sis_aggregates_agree_for_single_response():
    """Testa que max e soma coincidem com q = 1."""
    train, _ = _model3(p=20)
    np.testing.assert_allclose(sis_utilities(train, "max"), sis_utilities(train, "sum"))


def test_result_json_is_one_based_and_reloads():
    """Testa a serialização 1-based e a releitura."""
    train, _ = _model3(p=30)
    result = run_screen(train, ScreenConfig(d_main=3, d_inter=3))
    payload = json.loads(json.dumps(result.to_dict()))
    assert payload["m_hat"] == [j + 1 for j in result.m_hat]
    assert payload["i_hat"] == [[k + 1, l + 1] for k, l in result.i_hat]

    again = ScreenResult.from_dict(payload)
    assert again.m_hat == result.m_hat
    assert again.i_hat == result.i_hat
    assert again.p == 30
    assert again.config == result.config

    with pytest.raises(DataError):
        ScreenResult.from_dict({"m_hat": [1]})
