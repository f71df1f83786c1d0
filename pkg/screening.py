"""Screening - Etapa 1: utilidades ω̂/ω̂*, conjuntos M̂, Â e pares Î.

Modos:
- resposta única: M̂ por ω̂_j, Â por ω̂*_k, Î = pares de Â;
- união (multi-resposta): Î = pares de M̂ ∪ Â;
- linhas de base de ranking único: SIS2 (|corr| de Pearson, max/soma entre
  respostas), DCSIS2 (dcorr sem transformação) e DCSIS-square (só ω̂*).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed, effective_n_jobs

from config import DEGENERATE_TOL, VERSION, logger
from data_model import ConfigError, DataError, Dataset, Pair
from dcov_engine import (
    DistanceSummary,
    SampleCloud,
    dcorr_from_summaries,
    distance_variance,
    omega_from_summaries,
    response_transforms,
    square_transform,
    summarize,
)

Rule = Literal["top_k", "threshold"]
Baseline = Literal["none", "sis2", "dcsis2", "dcsis_square"]

BASELINES = ("none", "sis2", "dcsis2", "dcsis_square")
SIS_AGGREGATES = ("max", "sum")


def auto_size(n: int) -> int:
    """⌊n / log n⌋ (log natural)."""
    return max(1, int(math.floor(n / math.log(n))))


@dataclass
class ScreenConfig:
    """Parâmetros da triagem; `None` em d_main/d_inter significa auto."""
    rule: Rule = "top_k"
    tau1: Optional[float] = None
    tau2: Optional[float] = None
    d_main: Optional[int] = None
    d_inter: Optional[int] = None
    union_mode: bool = False
    baseline: Baseline = "none"
    sis_aggregate: Literal["max", "sum"] = "max"

    def problems(self) -> List[str]:
        """Todas as inconsistências, para relatar de uma vez."""
        problems = []
        if self.rule not in ("top_k", "threshold"):
            problems.append(f"regra desconhecida: {self.rule!r}")
        if self.baseline not in BASELINES:
            problems.append(f"linha de base desconhecida: {self.baseline!r}")
        if self.sis_aggregate not in SIS_AGGREGATES:
            problems.append(f"agregação SIS desconhecida: {self.sis_aggregate!r}")
        if self.rule == "threshold":
            if self.tau1 is None and self.baseline != "dcsis_square":
                problems.append("regra threshold exige tau1")
            if self.tau2 is None and self.baseline in ("none", "dcsis_square"):
                problems.append("regra threshold exige tau2")
            for name in ("tau1", "tau2"):
                value = getattr(self, name)
                if value is not None and value < 0:
                    problems.append(f"{name} deve ser >= 0")
        if self.rule == "top_k":
            for name in ("d_main", "d_inter"):
                value = getattr(self, name)
                if value is not None and value < 1:
                    problems.append(f"{name} deve ser inteiro positivo ou auto")
        return problems

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def resolved_sizes(self, n: int) -> Tuple[int, int]:
        auto = auto_size(n)
        return (self.d_main or auto, self.d_inter or auto)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ScreenResult:
    """Saída da triagem (índices 0-based internamente)."""
    omega_main: Optional[np.ndarray]
    omega_inter: Optional[np.ndarray]
    m_hat: List[int]
    a_hat: List[int]
    i_hat: List[Pair]
    union_set: Optional[List[int]] = None
    degenerate: List[int] = field(default_factory=list)
    degenerate_inter: List[int] = field(default_factory=list)
    dcorr2_main: Optional[np.ndarray] = None
    dcorr2_inter: Optional[np.ndarray] = None
    p: int = 0
    n: int = 0
    config: Optional[ScreenConfig] = None

    @property
    def main_candidates(self) -> List[int]:
        """Variáveis que entram como efeitos principais no desenho reduzido."""
        return self.union_set if self.union_set is not None else self.m_hat

    def to_dict(self) -> Dict[str, Any]:
        """Serialização JSON com índices 1-based."""

        def one_based(indices):
            return None if indices is None else [int(i) + 1 for i in indices]

        def floats(values):
            return None if values is None else [float(v) for v in values]

        payload: Dict[str, Any] = {
            "version": VERSION,
            "n": self.n,
            "p": self.p,
            "config": self.config.to_dict() if self.config else None,
            "omega_main": floats(self.omega_main),
            "omega_inter": floats(self.omega_inter),
            "dcorr2_main": floats(self.dcorr2_main),
            "dcorr2_inter": floats(self.dcorr2_inter),
            "m_hat": one_based(self.m_hat),
            "a_hat": one_based(self.a_hat),
            "i_hat": [[k + 1, l + 1] for k, l in self.i_hat],
            "union_set": one_based(self.union_set),
            "degenerate": one_based(self.degenerate),
            "degenerate_inter": one_based(self.degenerate_inter),
        }
        # Métodos de ranking único não produzem a utilidade ausente
        return {key: value for key, value in payload.items() if value is not None or key == "union_set"}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ScreenResult":
        """Reconstrói a partir do JSON (1-based) gravado por `to_dict`."""

        def zero_based(indices):
            return None if indices is None else [int(i) - 1 for i in indices]

        def array(values):
            return None if values is None else np.asarray(values, dtype=np.float64)

        try:
            config = ScreenConfig(**payload["config"]) if payload.get("config") else None
            pairs = [tuple(sorted((int(k) - 1, int(l) - 1))) for k, l in payload["i_hat"]]
            return cls(
                omega_main=array(payload.get("omega_main")),
                omega_inter=array(payload.get("omega_inter")),
                m_hat=zero_based(payload["m_hat"]),
                a_hat=zero_based(payload["a_hat"]),
                i_hat=pairs,
                union_set=zero_based(payload.get("union_set")),
                degenerate=zero_based(payload.get("degenerate")) or [],
                degenerate_inter=zero_based(payload.get("degenerate_inter")) or [],
                dcorr2_main=array(payload.get("dcorr2_main")),
                dcorr2_inter=array(payload.get("dcorr2_inter")),
                p=int(payload["p"]),
                n=int(payload.get("n", 0)),
                config=config,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"Resultado de triagem malformado: {exc}") from exc


# ----------------------------------------------------------------------
# Seleção de índices
# ----------------------------------------------------------------------
def select_by_threshold(omegas, tau: float, exclude: Sequence[int] = ()) -> List[int]:
    """{j : ω̂_j >= τ}, em ordem crescente de índice."""
    if tau < 0:
        raise ConfigError("tau deve ser >= 0")
    omegas = np.asarray(omegas, dtype=np.float64)
    keep = omegas >= tau
    if len(exclude):
        keep[list(exclude)] = False
    return [int(j) for j in np.flatnonzero(keep)]


def select_top_k(omegas, k: int, exclude: Sequence[int] = ()) -> List[int]:
    """Os k maiores valores; empate favorece o menor índice; saída crescente."""
    if k < 1:
        raise ConfigError("k deve ser >= 1")
    omegas = np.asarray(omegas, dtype=np.float64)
    excluded = set(int(j) for j in exclude)
    eligible = np.array([j for j in range(omegas.size) if j not in excluded], dtype=int)
    if eligible.size == 0:
        return []
    # lexsort: última chave é a primária (valor decrescente), depois índice
    order = eligible[np.lexsort((eligible, -omegas[eligible]))]
    return sorted(int(j) for j in order[:k])


def pairs_of(indices: Sequence[int]) -> List[Pair]:
    """Fecho de 2-subconjuntos {(k, l) : k < l}."""
    return [(int(k), int(l)) for k, l in itertools.combinations(sorted(set(indices)), 2)]


# ----------------------------------------------------------------------
# Utilidades
# ----------------------------------------------------------------------
def _column_block(
    x_block: np.ndarray,
    first: int,
    y_tilde_summary: DistanceSummary,
    y_star_summary: DistanceSummary,
) -> List[Tuple[int, float, float, bool, bool]]:
    """ω̂ e ω̂* de um bloco de colunas, com os índices globais a partir de `first`."""
    rows = []
    for offset in range(x_block.shape[1]):
        column = x_block[:, offset]
        main_summary = summarize(SampleCloud.of(column))
        inter_summary = summarize(SampleCloud.of(square_transform(column)))
        rows.append((
            first + offset,
            omega_from_summaries(main_summary, y_tilde_summary),
            omega_from_summaries(inter_summary, y_star_summary),
            distance_variance(main_summary) < DEGENERATE_TOL,
            distance_variance(inter_summary) < DEGENERATE_TOL,
        ))
    return rows


def _blocks(p: int, n_jobs: int) -> List[Tuple[int, int]]:
    """Fatias contíguas de colunas, cerca de quatro por worker."""
    workers = effective_n_jobs(n_jobs)
    size = max(1, math.ceil(p / (workers * 4)))
    return [(start, min(p, start + size)) for start in range(0, p, size)]


def _centered(x: np.ndarray) -> np.ndarray:
    """Centra cada coluna pela média amostral."""
    return x - x.mean(axis=0)


@dataclass(frozen=True, eq=False)
class Utilities:
    omega_main: np.ndarray
    omega_inter: np.ndarray
    degenerate_main: List[int]
    degenerate_inter: List[int]
    y_tilde_variance: float
    y_star_variance: float


def _utilities(data: Dataset, n_jobs: int = 1) -> Utilities:
    """ω̂, ω̂* e colunas degeneradas de todas as covariáveis."""
    x = _centered(np.asarray(data.x))
    y_tilde, y_star = response_transforms(data.y)
    y_tilde_summary = summarize(SampleCloud.of(y_tilde))
    y_star_summary = summarize(SampleCloud.of(y_star))

    blocks = _blocks(data.p, n_jobs)
    if n_jobs == 1 or len(blocks) == 1:
        chunks = [_column_block(x[:, a:b], a, y_tilde_summary, y_star_summary) for a, b in blocks]
    else:
        chunks = Parallel(n_jobs=n_jobs)(
            delayed(_column_block)(x[:, a:b], a, y_tilde_summary, y_star_summary)
            for a, b in blocks
        )

    omega_main = np.zeros(data.p)
    omega_inter = np.zeros(data.p)
    degenerate_main, degenerate_inter = [], []
    for chunk in chunks:
        for j, w_main, w_inter, flat_main, flat_inter in chunk:
            omega_main[j] = w_main
            omega_inter[j] = w_inter
            if flat_main:
                degenerate_main.append(j)
            if flat_inter:
                degenerate_inter.append(j)

    return Utilities(
        omega_main=omega_main,
        omega_inter=omega_inter,
        degenerate_main=sorted(degenerate_main),
        degenerate_inter=sorted(degenerate_inter),
        y_tilde_variance=distance_variance(y_tilde_summary),
        y_star_variance=distance_variance(y_star_summary),
    )


def compute_utilities(data: Dataset, n_jobs: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """(ω̂_j, ω̂*_k) para todas as colunas; resultado idêntico para qualquer n_jobs."""
    utilities = _utilities(data, n_jobs=n_jobs)
    return utilities.omega_main, utilities.omega_inter


def sis_utilities(data: Dataset, aggregate: str = "max") -> np.ndarray:
    """|corr(X_j, Y_r)| agregada por máximo ou soma entre respostas."""
    x = _centered(np.asarray(data.x))
    y = _centered(np.asarray(data.y))
    x_norm = np.linalg.norm(x, axis=0)
    y_norm = np.linalg.norm(y, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (x.T @ y) / np.outer(x_norm, y_norm)
    corr = np.abs(np.nan_to_num(corr, nan=0.0, posinf=0.0, neginf=0.0))
    return corr.max(axis=1) if aggregate == "max" else corr.sum(axis=1)


def _dcorr_block(x_block: np.ndarray, first: int, y_summary: DistanceSummary) -> List[Tuple[int, float, bool]]:
    """dcorr(X_j, y) de um bloco de colunas."""
    rows = []
    for offset in range(x_block.shape[1]):
        summary = summarize(SampleCloud.of(x_block[:, offset]))
        rows.append((first + offset, dcorr_from_summaries(summary, y_summary),
                     distance_variance(summary) < DEGENERATE_TOL))
    return rows


def dcsis_utilities(data: Dataset, n_jobs: int = 1) -> Tuple[np.ndarray, List[int]]:
    """dcorr(X_j, y) sem transformações, para a linha de base DCSIS2."""
    x = _centered(np.asarray(data.x))
    y_summary = summarize(SampleCloud.of(data.y))

    blocks = _blocks(data.p, n_jobs)
    if n_jobs == 1 or len(blocks) == 1:
        chunks = [_dcorr_block(x[:, a:b], a, y_summary) for a, b in blocks]
    else:
        chunks = Parallel(n_jobs=n_jobs)(
            delayed(_dcorr_block)(x[:, a:b], a, y_summary) for a, b in blocks
        )

    values = np.zeros(data.p)
    degenerate = []
    for chunk in chunks:
        for j, value, flat in chunk:
            values[j] = value
            if flat:
                degenerate.append(j)
    return values, sorted(degenerate)


# ----------------------------------------------------------------------
# Triagem completa
# ----------------------------------------------------------------------
def _select(omegas: np.ndarray, rule: Rule, tau: Optional[float], k: int, exclude: Sequence[int]) -> List[int]:
    """Aplica a regra top-k ou de limiar."""
    if rule == "threshold":
        return select_by_threshold(omegas, tau, exclude=exclude)
    return select_top_k(omegas, k, exclude=exclude)


def run_screen(data: Dataset, cfg: Optional[ScreenConfig] = None, n_jobs: int = 1) -> ScreenResult:
    """Executa a triagem conforme `cfg` (IPDC por padrão)."""

    cfg = cfg or ScreenConfig()
    cfg.validate()
    d_main, d_inter = cfg.resolved_sizes(data.n)

    if cfg.baseline in ("sis2", "dcsis2"):
        result = _single_ranking(data, cfg, d_main, d_inter, n_jobs)
    else:
        utilities = _utilities(data, n_jobs=n_jobs)
        dcorr2_main = utilities.omega_main / math.sqrt(utilities.y_tilde_variance) \
            if utilities.y_tilde_variance >= DEGENERATE_TOL else np.zeros(data.p)
        dcorr2_inter = utilities.omega_inter / math.sqrt(utilities.y_star_variance) \
            if utilities.y_star_variance >= DEGENERATE_TOL else np.zeros(data.p)

        single = cfg.baseline == "dcsis_square"
        k_inter = d_main + d_inter if single and cfg.union_mode else d_inter
        a_hat = _select(utilities.omega_inter, cfg.rule, cfg.tau2, k_inter, utilities.degenerate_inter)
        if single:
            # Ranking único por ω̂*: o mesmo conjunto responde por M̂ e Â
            m_hat: List[int] = list(a_hat)
            omega_main, dcorr2_main = None, None
        else:
            m_hat = _select(utilities.omega_main, cfg.rule, cfg.tau1, d_main, utilities.degenerate_main)
            omega_main = utilities.omega_main

        union_set = sorted(set(m_hat) | set(a_hat)) if cfg.union_mode else None
        result = ScreenResult(
            omega_main=omega_main,
            omega_inter=utilities.omega_inter,
            m_hat=m_hat,
            a_hat=a_hat,
            i_hat=pairs_of(union_set if union_set is not None else a_hat),
            union_set=union_set,
            degenerate=utilities.degenerate_main,
            degenerate_inter=utilities.degenerate_inter,
            dcorr2_main=dcorr2_main,
            dcorr2_inter=dcorr2_inter,
        )

    result.p = data.p
    result.n = data.n
    result.config = cfg
    _check_closure(result)
    logger.info(
        f"Triagem ({cfg.baseline if cfg.baseline != 'none' else 'ipdc'}): "
        f"|M̂|={len(result.m_hat)}, |Â|={len(result.a_hat)}, |Î|={len(result.i_hat)}"
    )
    return result


def _single_ranking(data: Dataset, cfg: ScreenConfig, d_main: int, d_inter: int, n_jobs: int) -> ScreenResult:
    """SIS2/DCSIS2: um único ranking responde por M̂ e Â."""
    if cfg.baseline == "sis2":
        utility = sis_utilities(data, cfg.sis_aggregate)
        degenerate = list(data.degenerate)
    else:
        utility, degenerate = dcsis_utilities(data, n_jobs=n_jobs)

    # Em modo união as linhas de base guardam d_main + d_inter variáveis
    k = d_main + d_inter if cfg.union_mode else d_main
    retained = _select(utility, cfg.rule, cfg.tau1, k, degenerate)
    return ScreenResult(
        omega_main=utility,
        omega_inter=None,
        m_hat=list(retained),
        a_hat=list(retained),
        i_hat=pairs_of(retained),
        union_set=list(retained) if cfg.union_mode else None,
        degenerate=degenerate,
    )


def _check_closure(result: ScreenResult) -> None:
    """Confere que Î é o fecho de pares do conjunto triado."""
    source = result.union_set if result.union_set is not None else result.a_hat
    expected = pairs_of(source)
    if result.i_hat != expected:
        raise AssertionError("Î deve ser exatamente o fecho de pares do conjunto triado")
    size = len(source)
    assert len(result.i_hat) == size * (size - 1) // 2
