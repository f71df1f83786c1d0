"""Dcov Engine - Covariância e correlação de distância amostrais (forma V).

Para amostras u (n×d_u) e v (n×d_v):

    S1 = n^-2 ΣΣ |u_i - u_j| |v_i - v_j|
    S2 = (n^-2 ΣΣ |u_i - u_j|) (n^-2 ΣΣ |v_i - v_j|)
    S3 = n^-3 ΣΣΣ |u_i - u_k| |v_j - v_k|
    dcov² = S1 + S2 - 2 S3

S3 é agrupado pelas somas de linha das matrizes de distância, em O(n²).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from config import DEGENERATE_TOL
from data_model import DataError


@dataclass(frozen=True, eq=False)
class SampleCloud:
    """n observações de um vetor aleatório d-dimensional."""
    points: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 2:
            raise DataError("SampleCloud espera uma matriz n×d")
        if not np.all(np.isfinite(self.points)):
            raise DataError("SampleCloud com valores não finitos")

    @classmethod
    def of(cls, values) -> "SampleCloud":
        """Aceita vetor (vira nuvem 1-D) ou matriz n×d."""
        points = np.asarray(values, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        return cls(points)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class DcovTerms:
    """As três somas da forma V e o dcov² resultante."""
    s1: float
    s2: float
    s3: float
    dcov2: float

    def as_dict(self) -> dict:
        return {"s1": self.s1, "s2": self.s2, "s3": self.s3, "dcov2": self.dcov2}


@dataclass(frozen=True, eq=False)
class DistanceSummary:
    """Matriz de distâncias de uma nuvem com somas de linha pré-computadas."""
    matrix: np.ndarray
    row_sums: np.ndarray
    total: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


DcovFn = Callable[[SampleCloud, SampleCloud], DcovTerms]


def summarize(cloud: SampleCloud) -> DistanceSummary:
    """Distâncias euclidianas par a par (buffer próprio de cada chamada)."""
    matrix = squareform(pdist(cloud.points, metric="euclidean"))
    row_sums = matrix.sum(axis=1)
    return DistanceSummary(matrix=matrix, row_sums=row_sums, total=float(row_sums.sum()))


def _finish(s1: float, s2: float, s3: float) -> DcovTerms:
    """Monta os termos, truncando dcov² negativo em 0."""
    dcov2 = s1 + s2 - 2.0 * s3
    # O valor populacional é não negativo; resta só arredondamento
    if dcov2 < 0.0:
        dcov2 = 0.0
    return DcovTerms(s1=s1, s2=s2, s3=s3, dcov2=dcov2)


def dcov2_from_summaries(a: DistanceSummary, b: DistanceSummary) -> DcovTerms:
    """dcov² a partir de resumos já calculados (reuso em triagem por colunas)."""
    if a.n != b.n:
        raise DataError(f"Amostras com tamanhos diferentes: {a.n} e {b.n}")
    n = a.n
    s1 = float(np.einsum("ij,ij->", a.matrix, b.matrix)) / n**2
    s2 = (a.total / n**2) * (b.total / n**2)
    s3 = float(a.row_sums @ b.row_sums) / n**3
    return _finish(s1, s2, s3)


def distance_variance(a: DistanceSummary) -> float:
    """dcov²(u, u) a partir do resumo de u."""
    return dcov2_from_summaries(a, a).dcov2


def _check_pair(u: SampleCloud, v: SampleCloud, min_n: int) -> None:
    """Exige o mesmo n nas duas amostras e pelo menos `min_n` observações."""
    if u.n != v.n:
        raise DataError(f"Amostras com tamanhos diferentes: {u.n} e {v.n}")
    if u.n < min_n:
        raise DataError(f"São necessárias pelo menos {min_n} observações (n={u.n})")


def sample_dcov2(u: SampleCloud, v: SampleCloud) -> DcovTerms:
    """Covariância de distância amostral ao quadrado, O(n²·(d_u + d_v))."""
    _check_pair(u, v, min_n=3)
    return dcov2_from_summaries(summarize(u), summarize(v))


def sample_dcov2_oracle(u: SampleCloud, v: SampleCloud) -> DcovTerms:
    """Avaliação literal das somas, incluindo a soma tripla O(n³).

    Só para testes. Aceita n = 2 para conferências feitas à mão.
    """
    _check_pair(u, v, min_n=2)
    n = u.n
    a = [[float(np.linalg.norm(u.points[i] - u.points[j])) for j in range(n)] for i in range(n)]
    b = [[float(np.linalg.norm(v.points[i] - v.points[j])) for j in range(n)] for i in range(n)]

    s1 = sum(a[i][j] * b[i][j] for i, j in itertools.product(range(n), repeat=2)) / n**2
    mean_a = sum(a[i][j] for i, j in itertools.product(range(n), repeat=2)) / n**2
    mean_b = sum(b[i][j] for i, j in itertools.product(range(n), repeat=2)) / n**2
    s3 = sum(a[i][k] * b[j][k] for i, j, k in itertools.product(range(n), repeat=3)) / n**3
    return _finish(s1, mean_a * mean_b, s3)


def dcorr_from_summaries(a: DistanceSummary, b: DistanceSummary) -> float:
    var_a = distance_variance(a)
    var_b = distance_variance(b)
    if var_a < DEGENERATE_TOL or var_b < DEGENERATE_TOL:
        return 0.0
    cross = dcov2_from_summaries(a, b).dcov2
    return float(np.sqrt(cross) / (var_a * var_b) ** 0.25)


def sample_dcorr(u: SampleCloud, v: SampleCloud) -> float:
    """Correlação de distância em [0, 1]; 0 se alguma variância de distância for degenerada."""
    _check_pair(u, v, min_n=3)
    return dcorr_from_summaries(summarize(u), summarize(v))


def square_transform(x_col) -> np.ndarray:
    """X*_k = X_k²."""
    values = np.asarray(x_col, dtype=np.float64)
    return values * values


def response_transforms(y) -> tuple[np.ndarray, np.ndarray]:
    """(ỹ, y*) = (y/√q, y∘y/q)."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    q = y.shape[1]
    if q < 1:
        raise DataError("y precisa de pelo menos uma resposta")
    y_tilde = y / np.sqrt(q)
    y_star = (y * y) / q
    return y_tilde, y_star


def _omega(x: np.ndarray, response: np.ndarray, dcov: Optional[DcovFn]) -> float:
    """ω pelos resumos de distância ou por um estimador injetado."""
    u = SampleCloud.of(x)
    v = SampleCloud.of(response)
    if dcov is None:
        _check_pair(u, v, min_n=3)
        x_summary = summarize(u)
        return omega_from_summaries(x_summary, summarize(v))
    own = dcov(u, u).dcov2
    if own < DEGENERATE_TOL:
        return 0.0
    return float(dcov(u, v).dcov2 / np.sqrt(own))


def omega_from_summaries(x_summary: DistanceSummary, response_summary: DistanceSummary) -> float:
    """ω = dcov²(X, resposta) / √dcov²(X, X); 0 para coluna degenerada."""
    own = distance_variance(x_summary)
    if own < DEGENERATE_TOL:
        return 0.0
    return float(dcov2_from_summaries(x_summary, response_summary).dcov2 / np.sqrt(own))


def omega_main(x_col, y_tilde, dcov: Optional[DcovFn] = None) -> float:
    """Utilidade marginal de efeito principal ω̂_j = dcov²(X_j, ỹ)/√dcov²(X_j, X_j).

    `dcov` permite trocar o estimador (ex.: o oráculo literal em testes).
    """
    return _omega(np.asarray(x_col, dtype=np.float64), y_tilde, dcov)


def omega_inter(x_col, y_star, dcov: Optional[DcovFn] = None) -> float:
    """Utilidade de variável de interação ω̂*_k = dcov²(X_k², y*)/√dcov²(X_k², X_k²)."""
    return _omega(square_transform(x_col), y_star, dcov)
