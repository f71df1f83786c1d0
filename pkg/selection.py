"""Selection - Etapa 2: desenho aumentado, group Lasso multivariado e refit.

Problema resolvido (colunas X̃ centradas, respostas Y centradas):

    min_B (1/2nq) ||Y - X̃B||_F² + λ Σ_j ||B_j||₂

por descida coordenada em blocos (uma linha de B por bloco). Cada bloco é
uma única coluna com q saídas, então a atualização por soft-threshold de
grupo é exata para qualquer norma de coluna:

    z = X̃_jᵀ R_j,   B_j ← max(0, 1 - nqλ/||z||) z / ||X̃_j||²
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.linear_model import Lasso, LassoCV
from sklearn.model_selection import KFold

from config import (
    CV_FOLDS,
    GLASSO_GRID_POINTS,
    GLASSO_GRID_RATIO,
    GLASSO_MAX_SWEEPS,
    GLASSO_TOL,
    KKT_TOL,
    LASSO_GRID_POINTS,
    LASSO_GRID_RATIO,
    VERSION,
    logger,
)
from data_model import ConfigError, DataError, Dataset, RngStream
from screening import ScreenResult


# ----------------------------------------------------------------------
# Termos do desenho
# ----------------------------------------------------------------------
@dataclass(frozen=True, order=True)
class Term:
    """Efeito principal Main(j) ou interação Inter(k, l), índices 0-based."""
    kind: Literal["main", "inter"]
    index: Tuple[int, ...]

    @classmethod
    def main(cls, j: int) -> "Term":
        return cls("main", (int(j),))

    @classmethod
    def inter(cls, k: int, l: int) -> "Term":
        if not k < l:
            raise DataError(f"Interação ({k + 1}, {l + 1}) exige k < l")
        return cls("inter", (int(k), int(l)))

    @property
    def label(self) -> str:
        """Rótulo 1-based: "M:j" ou "I:k:l"."""
        prefix = "M" if self.kind == "main" else "I"
        return ":".join([prefix] + [str(i + 1) for i in self.index])

    @classmethod
    def parse(cls, label: str) -> "Term":
        parts = label.split(":")
        if parts[0] == "M" and len(parts) == 2:
            return cls.main(int(parts[1]) - 1)
        if parts[0] == "I" and len(parts) == 3:
            return cls.inter(int(parts[1]) - 1, int(parts[2]) - 1)
        raise DataError(f"Rótulo de termo inválido: {label!r}")

    def raw_column(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "main":
            return x[:, self.index[0]]
        k, l = self.index
        return x[:, k] * x[:, l]


def term_columns(x: np.ndarray, terms: Sequence[Term]) -> np.ndarray:
    """Colunas brutas (não centradas) dos termos."""
    x = np.asarray(x, dtype=np.float64)
    if not terms:
        return np.zeros((x.shape[0], 0))
    return np.column_stack([term.raw_column(x) for term in terms])


@dataclass(eq=False)
class AugmentedDesign:
    """Desenho reduzido: colunas centradas (e escaladas) com proveniência."""
    columns: np.ndarray
    labels: List[Term]
    center: np.ndarray
    scale: np.ndarray
    y_center: np.ndarray
    y: np.ndarray
    degenerate: List[int] = field(default_factory=list)
    standardized: bool = True

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def d(self) -> int:
        return self.columns.shape[1]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Aplica o mesmo centro/escala a novas observações."""
        return (term_columns(x, self.labels) - self.center) / self.scale


def build_design(data: Dataset, screen: ScreenResult, standardize: bool = True) -> AugmentedDesign:
    """Colunas de M̂ (ou da união) seguidas dos produtos de Î, centradas.

    O produto bruto X_k∘X_l é centrado (não o produto de colunas centradas).
    """

    if screen.p and screen.p != data.p:
        raise DataError(f"Triagem feita com p={screen.p}, dados têm p={data.p}")

    terms: List[Term] = [Term.main(j) for j in sorted(screen.main_candidates)]
    terms += [Term.inter(k, l) for k, l in sorted(screen.i_hat)]
    for term in terms:
        if any(i < 0 or i >= data.p for i in term.index):
            raise DataError(f"Índice fora do intervalo 1..{data.p} no termo {term.label}")

    raw = term_columns(np.asarray(data.x), terms)
    center = raw.mean(axis=0) if terms else np.zeros(0)
    columns = raw - center
    sd = columns.std(axis=0) if terms else np.zeros(0)
    degenerate = [int(j) for j in np.flatnonzero(sd ** 2 < 1e-24)]
    if degenerate:
        columns[:, degenerate] = 0.0
        logger.warning(f"{len(degenerate)} coluna(s) constantes no desenho viram zero: "
                       f"{[terms[j].label for j in degenerate[:10]]}")

    scale = np.ones(len(terms))
    if standardize and terms:
        scale = np.where(sd ** 2 < 1e-24, 1.0, sd)
        columns = columns / scale

    y = np.asarray(data.y, dtype=np.float64)
    y_center = y.mean(axis=0)
    logger.info(f"Desenho aumentado: n={data.n}, d={len(terms)} "
                f"({sum(t.kind == 'main' for t in terms)} principais)")
    return AugmentedDesign(
        columns=columns,
        labels=terms,
        center=center,
        scale=scale,
        y_center=y_center,
        y=y - y_center,
        degenerate=degenerate,
        standardized=standardize,
    )


# ----------------------------------------------------------------------
# Group Lasso
# ----------------------------------------------------------------------
@dataclass(eq=False)
class GroupLassoFit:
    """Solução do group Lasso e diagnósticos do solver."""
    b_hat: np.ndarray
    b_std: np.ndarray
    lam: float
    sweeps: int
    objective_trace: List[float]
    kkt_violation: float
    converged: bool

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "sweeps": self.sweeps,
            "objective": self.objective_trace[-1] if self.objective_trace else None,
            "kkt_violation": self.kkt_violation,
            "converged": self.converged,
        }


def _check_dims(columns: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Respostas como matriz n×q com o mesmo n do desenho."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if columns.shape[0] != y.shape[0]:
        raise DataError(f"Desenho com {columns.shape[0]} linhas e respostas com {y.shape[0]}")
    return y


def group_lasso_objective(columns: np.ndarray, y: np.ndarray, b: np.ndarray, lam: float) -> float:
    """(1/2nq)||Y - X̃B||_F² + λ||B||_{2,1}."""
    n, q = y.shape
    residual = y - columns @ b
    return float(np.sum(residual ** 2) / (2 * n * q) + lam * np.sum(np.linalg.norm(b, axis=1)))


def kkt_violation(columns: np.ndarray, y: np.ndarray, b: np.ndarray, lam: float) -> float:
    """Maior resíduo KKT entre as linhas de B."""
    n, q = y.shape
    if b.shape[0] == 0:
        return 0.0
    gradient = columns.T @ (y - columns @ b) / (n * q)
    norms = np.linalg.norm(b, axis=1)
    zero = norms == 0
    violation = np.zeros(b.shape[0])
    violation[zero] = np.maximum(0.0, np.linalg.norm(gradient[zero], axis=1) - lam)
    nonzero = ~zero
    if nonzero.any():
        subgradient = lam * b[nonzero] / norms[nonzero, None]
        violation[nonzero] = np.linalg.norm(gradient[nonzero] - subgradient, axis=1)
    return float(violation.max())


def lambda_max_of(columns: np.ndarray, y: np.ndarray) -> float:
    n, q = y.shape
    if columns.shape[1] == 0:
        return 0.0
    return float(np.max(np.linalg.norm(columns.T @ y, axis=1)) / (n * q))


def lambda_max(design: AugmentedDesign, y_centered: Optional[np.ndarray] = None) -> float:
    """Menor λ em que B̂ = 0 satisfaz KKT: max_j ||X̃_jᵀY||₂ / (nq)."""
    y = _check_dims(design.columns, design.y if y_centered is None else y_centered)
    return lambda_max_of(design.columns, y)


def _block_coordinate_descent(
    columns: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float,
    max_sweeps: int,
    kkt_tol: float,
    init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[float], int, float, bool]:
    """Varreduras cíclicas por linha; para com queda relativa <= tol e KKT <= kkt_tol."""
    n, d = columns.shape
    q = y.shape[1]
    shrink = n * q * lam
    b = np.zeros((d, q)) if init is None else np.array(init, dtype=np.float64)
    residual = y - columns @ b
    col_sq = np.einsum("ij,ij->j", columns, columns)
    live = col_sq > 0

    def objective() -> float:
        return float(np.sum(residual ** 2) / (2 * n * q) + lam * np.sum(np.linalg.norm(b, axis=1)))

    trace = [objective()]
    converged = False
    sweeps = 0
    violation = np.inf

    for sweep in range(1, max_sweeps + 1):
        sweeps = sweep
        # Linhas nulas que continuariam nulas com o resíduo atual são puladas
        z_all = columns.T @ residual + col_sq[:, None] * b
        candidates = np.flatnonzero(
            live & ((np.linalg.norm(b, axis=1) > 0) | (np.linalg.norm(z_all, axis=1) > shrink))
        )
        for j in candidates:
            x_j = columns[:, j]
            old = b[j].copy()
            z = x_j @ residual + col_sq[j] * old
            norm = np.linalg.norm(z)
            if norm > shrink:
                new = (1.0 - shrink / norm) * z / col_sq[j]
            else:
                new = np.zeros(q)
            delta = new - old
            if np.any(delta != 0):
                residual -= np.outer(x_j, delta)
                b[j] = new

        trace.append(objective())
        previous = trace[-2]
        if previous - trace[-1] <= tol * max(abs(previous), np.finfo(float).tiny):
            violation = kkt_violation(columns, y, b, lam)
            if violation <= kkt_tol:
                converged = True
                break

    if not converged:
        violation = kkt_violation(columns, y, b, lam)
    return b, trace, sweeps, violation, converged


def group_lasso_fit(
    design: AugmentedDesign,
    y: Optional[np.ndarray] = None,
    lam: float = 0.0,
    tol: float = GLASSO_TOL,
    max_sweeps: int = GLASSO_MAX_SWEEPS,
    kkt_tol: float = KKT_TOL,
    warm_start: Optional[np.ndarray] = None,
) -> GroupLassoFit:
    """Ajusta o group Lasso por descida em blocos; devolve B̂ na escala original.

    Sem convergência, `converged=False` e o último iterado é devolvido.
    """

    if lam < 0:
        raise ConfigError("lambda deve ser >= 0")
    y = _check_dims(design.columns, design.y if y is None else y)
    if warm_start is not None and warm_start.shape != (design.d, y.shape[1]):
        raise DataError(f"warm_start com forma {warm_start.shape}, esperado {(design.d, y.shape[1])}")

    b_std, trace, sweeps, violation, converged = _block_coordinate_descent(
        design.columns, y, lam, tol, max_sweeps, kkt_tol, init=warm_start
    )
    if converged:
        logger.debug(f"Group Lasso λ={lam:.4g}: {sweeps} varreduras, KKT={violation:.2e}")
    else:
        logger.warning(f"Group Lasso λ={lam:.4g} não convergiu em {sweeps} varreduras "
                       f"(KKT={violation:.2e})")

    return GroupLassoFit(
        b_hat=b_std / design.scale[:, None],
        b_std=b_std,
        lam=float(lam),
        sweeps=sweeps,
        objective_trace=trace,
        kkt_violation=violation,
        converged=converged,
    )


def proximal_gradient_reference(
    columns: np.ndarray,
    y: np.ndarray,
    lam: float,
    max_iter: int = 200_000,
    tol: float = 1e-15,
) -> np.ndarray:
    """FISTA com reinício adaptativo; referência independente para testes."""

    columns = np.asarray(columns, dtype=np.float64)
    y = _check_dims(columns, y)
    n, d = columns.shape
    q = y.shape[1]
    lipschitz = np.linalg.norm(columns, 2) ** 2 / (n * q)
    if lipschitz == 0:
        return np.zeros((d, q))
    step = 1.0 / lipschitz

    def prox(v: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(norms > 0, np.maximum(0.0, 1.0 - step * lam / norms), 0.0)
        return factor * v

    b = np.zeros((d, q))
    momentum = b.copy()
    t = 1.0
    objective = group_lasso_objective(columns, y, b, lam)
    for _ in range(max_iter):
        gradient = -columns.T @ (y - columns @ momentum) / (n * q)
        b_next = prox(momentum - step * gradient)
        objective_next = group_lasso_objective(columns, y, b_next, lam)
        if objective_next > objective and t > 1.0:
            # reinício: descarta o momento
            momentum = b.copy()
            t = 1.0
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        momentum = b_next + ((t - 1) / t_next) * (b_next - b)
        change = np.max(np.abs(b_next - b)) if b.size else 0.0
        b, t, objective = b_next, t_next, objective_next
        if change < tol:
            break
    return b


# ----------------------------------------------------------------------
# Limiarização e refit
# ----------------------------------------------------------------------
def threshold_rows(fit: GroupLassoFit, t: Optional[float] = None) -> Tuple[np.ndarray, List[int], float]:
    """Zera linhas com ||B̂_j||₂/√q <= t.

    Sem `t`, usa 1e-6·max_j ||B̂_j||₂/√q (limpeza de zeros numéricos).
    Devolve (B̃, linhas sobreviventes, t usado).
    """

    q = fit.b_hat.shape[1]
    scores = np.linalg.norm(fit.b_hat, axis=1) / np.sqrt(q)
    if t is None:
        t = 1e-6 * float(scores.max()) if scores.size else 0.0
    if t < 0:
        raise ConfigError("limiar t deve ser >= 0")
    keep = scores > t
    b_tilde = np.where(keep[:, None], fit.b_hat, 0.0)
    return b_tilde, [int(j) for j in np.flatnonzero(keep)], float(t)


def lasso_grid(columns: np.ndarray, y_col: np.ndarray,
               points: int = LASSO_GRID_POINTS, ratio: float = LASSO_GRID_RATIO) -> np.ndarray:
    """Grade geométrica decrescente a partir do lambda_max da resposta."""
    n = columns.shape[0]
    top = float(np.max(np.abs(columns.T @ y_col)) / n) if columns.shape[1] else 0.0
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * ratio, points)


@dataclass(eq=False)
class RefitResult:
    """Lasso por resposta sobre o suporte recuperado (escala do solver)."""
    supports: List[List[int]]
    coef_std: np.ndarray
    intercept_std: np.ndarray
    lambdas: List[float]


def _refit_one(
    sub: np.ndarray,
    y_col: np.ndarray,
    grid: Optional[Sequence[float]],
    cv_folds: int,
    random_state: int,
) -> Tuple[np.ndarray, float, float]:
    """Lasso de uma resposta: valor fixo, LassoCV na grade ou zeros se λ_max = 0."""
    alphas = np.sort(np.asarray(grid, dtype=np.float64))[::-1] if grid is not None else lasso_grid(sub, y_col)
    if alphas[0] <= 0:
        return np.zeros(sub.shape[1]), float(np.mean(y_col)), 0.0
    if alphas.size == 1:
        model = Lasso(alpha=float(alphas[0]), max_iter=100_000, tol=1e-8)
        model.fit(sub, y_col)
        return model.coef_, float(model.intercept_), float(alphas[0])
    folds = KFold(n_splits=cv_folds, shuffle=True, random_state=random_state)
    model = LassoCV(alphas=alphas, cv=folds, max_iter=100_000, tol=1e-8)
    model.fit(sub, y_col)
    return model.coef_, float(model.intercept_), float(model.alpha_)


def lasso_refit(
    design: AugmentedDesign,
    y: Optional[np.ndarray],
    row_support: Sequence[int],
    lambda_grid: Optional[Sequence[float]] = None,
    cv_folds: int = CV_FOLDS,
    rng: Optional[RngStream] = None,
    n_jobs: int = 1,
) -> RefitResult:
    """Lasso por resposta nas colunas de `row_support`, λ_r por validação cruzada."""

    y = _check_dims(design.columns, design.y if y is None else y)
    n, q = y.shape
    if cv_folds < 2 or cv_folds > n:
        raise ConfigError(f"cv_folds deve estar em [2, n={n}] (recebido {cv_folds})")
    support = sorted(int(j) for j in row_support)
    rng = rng or RngStream(0, 0)

    coef = np.zeros((design.d, q))
    if not support:
        logger.info("Suporte vazio: refit apenas com intercepto")
        return RefitResult([[] for _ in range(q)], coef, y.mean(axis=0), [float("nan")] * q)

    sub = design.columns[:, support]
    seeds = [rng.substream(r).random_state() for r in range(q)]
    tasks = (delayed(_refit_one)(sub, y[:, r], lambda_grid, cv_folds, seeds[r]) for r in range(q))
    results = Parallel(n_jobs=n_jobs)(tasks) if n_jobs != 1 and q > 1 else [
        _refit_one(sub, y[:, r], lambda_grid, cv_folds, seeds[r]) for r in range(q)
    ]

    intercepts = np.zeros(q)
    lambdas = []
    supports = []
    for r, (coef_r, intercept_r, alpha_r) in enumerate(results):
        coef[support, r] = coef_r
        intercepts[r] = intercept_r
        lambdas.append(alpha_r)
        supports.append([support[i] for i in np.flatnonzero(coef_r)])
    return RefitResult(supports, coef, intercepts, lambdas)


def _fold_path(
    columns: np.ndarray,
    y: np.ndarray,
    train: np.ndarray,
    test: np.ndarray,
    grid: np.ndarray,
    tol: float,
    max_sweeps: int,
    kkt_tol: float,
) -> np.ndarray:
    """Erro de teste ao longo da grade em um fold, com warm start."""
    x_mean = columns[train].mean(axis=0)
    y_mean = y[train].mean(axis=0)
    x_train, y_train = columns[train] - x_mean, y[train] - y_mean
    x_test, y_test = columns[test] - x_mean, y[test] - y_mean

    errors = np.empty(grid.size)
    b = None
    for i, lam in enumerate(grid):
        b, _, _, _, _ = _block_coordinate_descent(x_train, y_train, lam, tol, max_sweeps, kkt_tol, init=b)
        errors[i] = np.sum((y_test - x_test @ b) ** 2) / len(test)
    return errors


def group_lasso_grid(design: AugmentedDesign, y: np.ndarray,
                     points: int = GLASSO_GRID_POINTS, ratio: float = GLASSO_GRID_RATIO) -> np.ndarray:
    top = lambda_max_of(design.columns, y)
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * ratio, points)


def select_lambda_cv(
    design: AugmentedDesign,
    y: Optional[np.ndarray] = None,
    lambda_grid: Optional[Sequence[float]] = None,
    cv_folds: int = CV_FOLDS,
    rng: Optional[RngStream] = None,
    n_jobs: int = 1,
    tol: float = GLASSO_TOL,
    max_sweeps: int = GLASSO_MAX_SWEEPS,
    kkt_tol: float = KKT_TOL,
) -> float:
    """λ da grade que minimiza o erro de predição (Frobenius) médio fora do fold."""

    y = _check_dims(design.columns, design.y if y is None else y)
    if cv_folds < 2 or cv_folds > design.n:
        raise ConfigError(f"cv_folds deve estar em [2, n={design.n}] (recebido {cv_folds})")
    grid = (np.sort(np.asarray(lambda_grid, dtype=np.float64))[::-1]
            if lambda_grid is not None else group_lasso_grid(design, y))
    if grid.size == 1:
        return float(grid[0])

    rng = rng or RngStream(0, 0)
    splitter = KFold(n_splits=cv_folds, shuffle=True, random_state=rng.random_state())
    folds = list(splitter.split(design.columns))
    args = [(design.columns, y, train, test, grid, tol, max_sweeps, kkt_tol) for train, test in folds]
    if n_jobs == 1:
        paths = [_fold_path(*a) for a in args]
    else:
        paths = Parallel(n_jobs=n_jobs)(delayed(_fold_path)(*a) for a in args)

    mean_error = np.mean(paths, axis=0)
    # argmin devolve o primeiro mínimo: em empate fica o maior λ
    chosen = float(grid[int(np.argmin(mean_error))])
    logger.info(f"λ por validação cruzada ({cv_folds} folds, {grid.size} valores): {chosen:.4g}")
    return chosen


# ----------------------------------------------------------------------
# Pipeline
# ----------------------------------------------------------------------
@dataclass
class SelectConfig:
    """Opções da etapa de seleção."""
    lambda_mode: Literal["cv", "fixed"] = "cv"
    lambda_value: Optional[float] = None
    cv_folds: int = CV_FOLDS
    threshold: Optional[float] = None
    standardize: bool = True
    group_step: bool = True
    refit: bool = True
    lambda_grid: Optional[List[float]] = None
    refit_grid: Optional[List[float]] = None
    tol: float = GLASSO_TOL
    max_sweeps: int = GLASSO_MAX_SWEEPS

    def problems(self) -> List[str]:
        problems = []
        if self.lambda_mode not in ("cv", "fixed"):
            problems.append(f"modo de lambda desconhecido: {self.lambda_mode!r}")
        if self.lambda_mode == "fixed" and (self.lambda_value is None or self.lambda_value < 0):
            problems.append("modo fixed exige lambda >= 0")
        if self.cv_folds < 2:
            problems.append("folds deve ser >= 2")
        if self.threshold is not None and self.threshold < 0:
            problems.append("threshold deve ser >= 0")
        if self.max_sweeps < 1:
            problems.append("max_sweeps deve ser >= 1")
        if not self.group_step and not self.refit:
            problems.append("sem group Lasso é preciso manter o refit por resposta")
        return problems

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)


@dataclass(eq=False)
class SelectResult:
    """Saída da seleção; coeficientes na escala bruta dos termos."""
    terms: List[Term]
    row_support: List[Term]
    b_tilde: np.ndarray
    per_response_support: List[List[Term]]
    per_response_coef: np.ndarray
    intercept: np.ndarray
    threshold_used: Optional[float]
    lam: Optional[float]
    refit_lambdas: List[float] = field(default_factory=list)
    fit: Optional[GroupLassoFit] = None

    @property
    def converged(self) -> bool:
        return self.fit is None or self.fit.converged

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Ŷ = termos brutos de x · coeficientes + intercepto."""
        return term_columns(x, self.terms) @ self.per_response_coef + self.intercept

    def selected_union(self) -> List[Term]:
        """União, entre respostas, dos termos com coeficiente não nulo."""
        return sorted({term for support in self.per_response_support for term in support})

    def to_dict(self) -> Dict[str, Any]:
        def finite_or_none(value):
            return None if value is None or not np.isfinite(value) else float(value)

        return {
            "version": VERSION,
            "lambda": finite_or_none(self.lam),
            "terms": [t.label for t in self.terms],
            "row_support": [t.label for t in self.row_support],
            "b_tilde": self.b_tilde.tolist(),
            "per_response_support": [[t.label for t in s] for s in self.per_response_support],
            "per_response_coef": self.per_response_coef.T.tolist(),
            "intercept": self.intercept.tolist(),
            "threshold_used": finite_or_none(self.threshold_used),
            "refit_lambdas": [finite_or_none(v) for v in self.refit_lambdas],
            "diagnostics": self.fit.diagnostics() if self.fit else None,
        }


def _raw_scale(design: AugmentedDesign, coef_std: np.ndarray, intercept_std: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Leva coeficientes e interceptos da escala padronizada para a bruta."""
    coef = coef_std / design.scale[:, None] if design.d else coef_std
    intercept = design.y_center + intercept_std - design.center @ coef
    return coef, intercept


def run_select(
    data: Dataset,
    screen: ScreenResult,
    cfg: Optional[SelectConfig] = None,
    rng: Optional[RngStream] = None,
    n_jobs: int = 1,
) -> SelectResult:
    """Desenho → group Lasso → limiarização → Lasso por resposta."""

    cfg = cfg or SelectConfig()
    cfg.validate()
    rng = rng or RngStream(0, 0)
    design = build_design(data, screen, standardize=cfg.standardize)
    q = design.q

    fit = None
    threshold_used = None
    lam = None
    if cfg.group_step:
        if cfg.lambda_mode == "fixed":
            lam = float(cfg.lambda_value)
        else:
            lam = select_lambda_cv(design, design.y, cfg.lambda_grid, cfg.cv_folds,
                                   rng.substream(1), n_jobs=n_jobs, tol=cfg.tol,
                                   max_sweeps=cfg.max_sweeps)
        fit = group_lasso_fit(design, design.y, lam, tol=cfg.tol, max_sweeps=cfg.max_sweeps)
        b_tilde, rows, threshold_used = threshold_rows(fit, cfg.threshold)
    else:
        rows = [j for j in range(design.d) if j not in design.degenerate]
        b_tilde = None

    if cfg.refit:
        refit = lasso_refit(design, design.y, rows, cfg.refit_grid, cfg.cv_folds,
                            rng.substream(2), n_jobs=n_jobs)
        coef, intercept = _raw_scale(design, refit.coef_std, refit.intercept_std)
        supports = refit.supports
        refit_lambdas = refit.lambdas
    else:
        coef = b_tilde.copy()
        intercept = design.y_center - design.center @ coef
        supports = [[int(j) for j in np.flatnonzero(coef[:, r])] for r in range(q)]
        refit_lambdas = []

    if b_tilde is None:
        b_tilde = coef.copy()

    result = SelectResult(
        terms=list(design.labels),
        row_support=[design.labels[j] for j in rows],
        b_tilde=b_tilde,
        per_response_support=[[design.labels[j] for j in s] for s in supports],
        per_response_coef=coef,
        intercept=intercept,
        threshold_used=threshold_used,
        lam=lam,
        refit_lambdas=refit_lambdas,
        fit=fit,
    )
    for support in result.per_response_support:
        assert set(support) <= set(result.row_support)
    logger.info(f"Seleção: {len(result.row_support)} linhas no suporte, "
                f"{len(result.selected_union())} termos após refit")
    return result
