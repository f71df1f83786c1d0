"""Testes do motor de covariância/correlação de distância."""

from __future__ import annotations

import dcor
import numpy as np
import pytest

from data_model import DataError
from dcov_engine import (
    SampleCloud,
    omega_inter,
    omega_main,
    response_transforms,
    sample_dcorr,
    sample_dcov2,
    sample_dcov2_oracle,
    square_transform,
)


def _cloud(values) -> SampleCloud:
    return SampleCloud.of(values)


def test_toy_example_by_hand():
    """Testa as somas da forma V no exemplo de duas observações."""
    terms = sample_dcov2_oracle(_cloud([0.0, 1.0]), _cloud([0.0, 1.0]))
    assert terms.s1 == pytest.approx(0.5)
    assert terms.s2 == pytest.approx(0.25)
    assert terms.s3 == pytest.approx(0.25)
    assert terms.dcov2 == pytest.approx(0.25)


def test_fast_estimator_requires_three_rows():
    """Testa que a versão rápida recusa n < 3 e tamanhos diferentes."""
    with pytest.raises(DataError):
        sample_dcov2(_cloud([0.0, 1.0]), _cloud([0.0, 1.0]))
    with pytest.raises(DataError):
        sample_dcov2(_cloud([0.0, 1.0, 2.0]), _cloud([0.0, 1.0, 2.0, 3.0]))


def test_cloud_rejects_non_finite():
    """Testa a validação de entradas não finitas."""
    with pytest.raises(DataError):
        _cloud([0.0, np.nan, 1.0])


def test_constant_cloud_gives_zero():
    """Testa nuvem constante: todas as somas nulas."""
    rng = np.random.default_rng(1)
    terms = sample_dcov2(_cloud(np.full(8, 3.0)), _cloud(rng.normal(size=8)))
    assert terms.s1 == 0.0 and terms.s2 == 0.0 and terms.s3 == 0.0
    assert terms.dcov2 == 0.0
    assert sample_dcorr(_cloud(np.full(8, 3.0)), _cloud(rng.normal(size=8))) == 0.0


def test_fast_matches_literal_oracle():
    """Testa a equivalência com a soma tripla literal em 200 instâncias."""
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(3, 13))
        u = rng.normal(size=(n, int(rng.integers(1, 4))))
        v = rng.normal(size=(n, int(rng.integers(1, 4))))
        fast = sample_dcov2(SampleCloud(u), SampleCloud(v))
        slow = sample_dcov2_oracle(SampleCloud(u), SampleCloud(v))
        scale = max(slow.s1, slow.s2, 1.0)
        for name in ("s1", "s2", "s3", "dcov2"):
            assert abs(getattr(fast, name) - getattr(slow, name)) <= 1e-12 * scale


def test_matches_dcor_package():
    """Testa contra o estimador V do pacote dcor."""
    rng = np.random.default_rng(7)
    u = rng.normal(size=(40, 2))
    v = u[:, :1] ** 2 + rng.normal(size=(40, 1))
    ours = sample_dcov2(SampleCloud(u), SampleCloud(v)).dcov2
    assert ours == pytest.approx(dcor.distance_covariance_sqr(u, v), rel=1e-10)
    assert sample_dcorr(SampleCloud(u), SampleCloud(v)) == pytest.approx(
        dcor.distance_correlation(u, v), rel=1e-10
    )


def test_symmetry():
    """Testa que trocar os argumentos não muda as somas."""
    rng = np.random.default_rng(3)
    u, v = _cloud(rng.normal(size=15)), _cloud(rng.normal(size=15))
    assert sample_dcov2(u, v) == sample_dcov2(v, u)
    assert sample_dcov2_oracle(u, v).dcov2 == pytest.approx(sample_dcov2_oracle(v, u).dcov2, rel=1e-14)


def test_dcorr_properties():
    """Testa dcorr(u,u)=1, intervalo [0,1] e invariâncias de translação e escala."""
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(5, 40))
        u = rng.normal(size=(n, int(rng.integers(1, 4))))
        v = rng.normal(size=(n, int(rng.integers(1, 3)))) + 0.5 * u[:, :1]
        base = sample_dcorr(SampleCloud(u), SampleCloud(v))

        assert sample_dcorr(SampleCloud(u), SampleCloud(u)) == pytest.approx(1.0, abs=1e-10)
        assert 0.0 <= base <= 1.0 + 1e-10

        shifted = sample_dcov2(SampleCloud(u + 5.0), SampleCloud(v))
        original = sample_dcov2(SampleCloud(u), SampleCloud(v))
        for name in ("s1", "s2", "s3"):
            assert getattr(shifted, name) == pytest.approx(getattr(original, name), rel=1e-12)

        a = float(rng.uniform(0.1, 10.0))
        assert sample_dcorr(SampleCloud(a * u), SampleCloud(v)) == pytest.approx(base, abs=1e-10)
        scaled = sample_dcov2(SampleCloud(a * u), SampleCloud(v))
        assert scaled.s1 == pytest.approx(a * original.s1, rel=1e-10)


def test_independent_samples_have_small_dcorr():
    """Testa amostras independentes: cada dcorr em [0, 0.15]."""
    values = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        values.append(sample_dcorr(_cloud(rng.normal(size=500)), _cloud(rng.normal(size=500))))
    assert all(0.0 <= value <= 0.15 for value in values)


def test_dcorr_increases_with_gaussian_correlation():
    """Testa que a dcorr média cresce com |corr| em normais bivariadas."""
    means = []
    for rho in (0.1, 0.3, 0.5, 0.7, 0.9):
        values = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=300)
            y = rho * x + np.sqrt(1 - rho**2) * rng.normal(size=300)
            values.append(sample_dcorr(_cloud(x), _cloud(y)))
        means.append(np.mean(values))
    assert all(a < b for a, b in zip(means, means[1:]))


def test_square_transform():
    """Testa a transformação quadrática elemento a elemento."""
    np.testing.assert_array_equal(square_transform([-1.0, 2.0, 0.0]), [1.0, 4.0, 0.0])
    np.testing.assert_array_equal(square_transform(np.zeros(4)), np.zeros(4))
    assert square_transform(square_transform([3.0]))[0] == 81.0


def test_response_transforms():
    """Testa ỹ = y/√q e y* = y∘y/q."""
    y = np.array([[1.0], [-2.0], [3.0]])
    y_tilde, y_star = response_transforms(y)
    np.testing.assert_array_equal(y_tilde, y)
    np.testing.assert_array_equal(y_star, y * y)

    y_tilde, y_star = response_transforms(np.full((1, 4), 2.0))
    np.testing.assert_allclose(y_tilde, np.ones((1, 4)))
    np.testing.assert_allclose(y_star, np.ones((1, 4)))

    rng = np.random.default_rng(5)
    y_tilde, y_star = response_transforms(rng.normal(size=(20, 3)))
    np.testing.assert_allclose(y_star, y_tilde * y_tilde, rtol=1e-15)


def test_omega_uses_joint_response_cloud():
    """Testa ω̂ e ω̂* contra dcov² na nuvem q-dimensional inteira, não na soma por resposta."""
    rng = np.random.default_rng(21)
    x = rng.normal(size=60)
    y = np.column_stack([x + rng.normal(size=60), x * x + 1.0 + rng.normal(size=60), rng.normal(size=60)])
    y_tilde, y_star = response_transforms(y)

    expected = dcor.distance_covariance_sqr(x, y_tilde) / np.sqrt(dcor.distance_covariance_sqr(x, x))
    assert omega_main(x, y_tilde) == pytest.approx(expected, rel=1e-10)
    x2 = x * x
    expected = dcor.distance_covariance_sqr(x2, y_star) / np.sqrt(dcor.distance_covariance_sqr(x2, x2))
    assert omega_inter(x, y_star) == pytest.approx(expected, rel=1e-10)

    summed = sum(omega_main(x, y_tilde[:, r]) for r in range(3))
    assert omega_main(x, y_tilde) != pytest.approx(summed, rel=1e-3)


def test_omega_toy_and_degenerate():
    """Testa ω̂ no exemplo de duas linhas e a convenção de coluna degenerada."""
    assert omega_main([0.0, 1.0], [0.0, 1.0], dcov=sample_dcov2_oracle) == pytest.approx(0.5)

    rng = np.random.default_rng(9)
    y = rng.normal(size=30)
    assert omega_main(np.full(30, 2.0), y) == 0.0
    assert omega_inter(np.full(30, 2.0), y * y) == 0.0
    signs = np.where(rng.random(30) < 0.5, -1.0, 1.0)
    assert omega_inter(signs, y * y) == 0.0


def test_omega_ranking_matches_dcorr_ranking():
    """Testa que ordenar por ω̂ equivale a ordenar por dcorr com a resposta."""
    rng = np.random.default_rng(13)
    x = rng.normal(size=(80, 12))
    y = x[:, 0] + 0.5 * x[:, 3] ** 2 + rng.normal(size=80)
    omegas = [omega_main(x[:, j], y) for j in range(12)]
    dcorrs = [sample_dcorr(_cloud(x[:, j]), _cloud(y)) for j in range(12)]
    assert list(np.argsort(omegas)) == list(np.argsort(dcorrs))
