"""Simulation - Modelos 1-6, driver Monte Carlo e métricas de avaliação."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.signal import lfilter
from threadpoolctl import threadpool_limits

from config import DEFAULT_P, DEFAULT_REPLICATES, TEST_N, VERSION, logger
from data_model import (
    ConfigError,
    DataError,
    Dataset,
    GroundTruth,
    Pair,
    PathLike,
    RngStream,
    atomic_write_text,
    validate_dataset,
)
from dcov_engine import SampleCloud, sample_dcorr, square_transform
from screening import ScreenConfig, ScreenResult, run_screen
from selection import SelectConfig, Term, run_select


ERROR_KINDS = ("gaussian_unit", "t5")

# Supports por resposta dos modelos multi-resposta (índices 0-based).
# Cada entrada: (efeitos principais, pares de interação).
MODEL5_TEMPLATES: List[Tuple[List[int], List[Pair]]] = [
    ([0, 1], [(0, 1)]),
    ([0, 1], [(0, 2)]),
    ([0, 1], [(5, 6)]),
    ([0, 1], [(7, 8)]),
    ([], [(5, 6), (7, 8)]),
]
MODEL6_TEMPLATES: List[Tuple[List[int], List[Pair]]] = [
    ([0, 1, 2, 3], [(0, 1), (2, 3)]),
    ([0, 1, 2, 3], [(0, 2), (3, 4)]),
    ([0, 1, 2, 3], [(3, 4), (8, 12)]),
    ([0, 1, 2, 3], [(8, 11), (11, 12)]),
    ([], [(8, 11), (8, 12), (11, 12)]),
]

# Modelos 1-4: coeficientes fixos (principais, interações, colunas indicadoras)
FIXED_MODELS: Dict[int, Tuple[Dict[int, float], Dict[Pair, float], Tuple[int, ...]]] = {
    1: ({0: 2.0, 1: 2.0}, {(0, 1): 1.0}, ()),
    2: ({0: 2.0}, {(0, 1): 3.0, (0, 2): 3.0}, ()),
    3: ({}, {(0, 1): 3.0, (0, 2): 3.0}, ()),
    4: ({11: 3.0, 21: 2.0}, {(0, 1): 3.0}, (11,)),
}

MODEL_DEFAULTS: Dict[int, Dict[str, Any]] = {
    1: dict(n=200, rho=0.5, q=1, error_kind="gaussian_unit", discretize_even=False, coef_rule="fixed"),
    2: dict(n=200, rho=0.5, q=1, error_kind="gaussian_unit", discretize_even=False, coef_rule="fixed"),
    3: dict(n=200, rho=0.5, q=1, error_kind="gaussian_unit", discretize_even=False, coef_rule="fixed"),
    4: dict(n=200, rho=0.5, q=1, error_kind="gaussian_unit", discretize_even=False, coef_rule="fixed"),
    5: dict(n=100, rho=0.5, q=10, error_kind="gaussian_unit", discretize_even=False, coef_rule="signed_uniform"),
    6: dict(n=100, rho=0.8, q=50, error_kind="t5", discretize_even=True, coef_rule="signed_uniform"),
}


# ----------------------------------------------------------------------
# Especificação
# ----------------------------------------------------------------------
@dataclass
class CustomModel:
    """Modelo esparso definido pelo usuário (JSON com índices 1-based)."""
    q: int
    coef_main: Dict[int, np.ndarray]
    coef_inter: Dict[Pair, np.ndarray]
    intercept: np.ndarray
    indicator_main: Tuple[int, ...] = ()
    noise_scale: float = 1.0

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "CustomModel":
        try:
            q = int(payload.get("q", 1))

            def coef(values) -> np.ndarray:
                array = np.asarray(values, dtype=np.float64).reshape(-1)
                if array.size != q:
                    raise DataError(f"coeficiente com {array.size} valores para q={q}")
                return array

            coef_main = {int(item["var"]) - 1: coef(item["coef"]) for item in payload.get("main", [])}
            coef_inter = {}
            for item in payload.get("inter", []):
                k, l = sorted(int(i) - 1 for i in item["pair"])
                if k == l:
                    raise DataError(f"par de interação repetido: {item['pair']}")
                coef_inter[(k, l)] = coef(item["coef"])
            intercept = coef(payload.get("intercept", [0.0] * q))
            indicator = tuple(int(j) - 1 for j in payload.get("indicator_main", []))
            noise_scale = float(payload.get("noise_scale", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"Modelo customizado malformado: {exc}") from exc
        if noise_scale < 0:
            raise DataError("noise_scale deve ser >= 0")
        return cls(q, coef_main, coef_inter, intercept, indicator, noise_scale)

    @classmethod
    def from_json(cls, path: PathLike) -> "CustomModel":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"Falha ao ler modelo customizado {path}: {exc}") from exc
        return cls.from_dict(payload)

    def max_index(self) -> int:
        indices = list(self.coef_main) + [i for pair in self.coef_inter for i in pair]
        return max(indices, default=-1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "main": [{"var": j + 1, "coef": c.tolist()} for j, c in sorted(self.coef_main.items())],
            "inter": [{"pair": [k + 1, l + 1], "coef": c.tolist()} for (k, l), c in sorted(self.coef_inter.items())],
            "intercept": self.intercept.tolist(),
            "indicator_main": [j + 1 for j in self.indicator_main],
            "noise_scale": self.noise_scale,
        }


@dataclass
class SimModelSpec:
    """Parâmetros de um estudo de simulação."""
    model_id: Union[int, str]
    n: int
    p: int
    rho: float
    q: int
    error_kind: str = "gaussian_unit"
    discretize_even: bool = False
    coef_rule: str = "fixed"
    test_n: int = TEST_N
    replicates: int = DEFAULT_REPLICATES
    master_seed: int = 0
    custom: Optional[CustomModel] = None

    @classmethod
    def for_model(cls, model_id: Union[int, str], custom: Optional[CustomModel] = None, **overrides) -> "SimModelSpec":
        """Preenche os campos implicados pelo modelo; `overrides` com None são ignorados."""
        overrides = {key: value for key, value in overrides.items() if value is not None}
        if model_id == "custom":
            if custom is None:
                raise ConfigError("modelo custom exige --custom-model")
            base = dict(n=200, rho=0.5, q=custom.q, error_kind="gaussian_unit",
                        discretize_even=False, coef_rule="fixed")
        else:
            try:
                model_id = int(model_id)
                base = dict(MODEL_DEFAULTS[model_id])
            except (KeyError, ValueError):
                raise ConfigError(f"modelo desconhecido: {model_id!r}") from None
        base.setdefault("p", DEFAULT_P)
        base.update(overrides)
        spec = cls(model_id=model_id, custom=custom, **base)
        spec.validate()
        return spec

    def required_p(self) -> int:
        if self.model_id == "custom":
            return self.custom.max_index() + 1 if self.custom else 0
        if self.model_id in FIXED_MODELS:
            mains, pairs, _ = FIXED_MODELS[self.model_id]
            return max(list(mains) + [i for pair in pairs for i in pair]) + 1
        templates = MODEL5_TEMPLATES if self.model_id == 5 else MODEL6_TEMPLATES
        return max(i for mains, pairs in templates for i in mains + [v for pair in pairs for v in pair]) + 1

    def problems(self) -> List[str]:
        problems = []
        if self.model_id not in (1, 2, 3, 4, 5, 6, "custom"):
            problems.append(f"modelo desconhecido: {self.model_id!r}")
            return problems
        if not -1 < self.rho < 1:
            problems.append("rho deve estar em (-1, 1)")
        if self.n < 3:
            problems.append("n deve ser >= 3")
        if self.test_n < 1:
            problems.append("test_n deve ser >= 1")
        if self.replicates < 1:
            problems.append("replicates deve ser >= 1")
        if not 0 <= self.master_seed < 2**64:
            problems.append("seed deve ser inteiro de 64 bits sem sinal")
        if self.error_kind not in ERROR_KINDS:
            problems.append(f"tipo de erro desconhecido: {self.error_kind!r}")
        if self.p < self.required_p():
            problems.append(f"modelo {self.model_id} exige p >= {self.required_p()}")

        if self.model_id in (1, 2, 3, 4) and self.q != 1:
            problems.append(f"modelo {self.model_id} tem q = 1")
        if self.model_id == 5 and self.q != 10:
            problems.append("modelo 5 tem q = 10")
        if self.model_id == 6:
            if self.q != 50:
                problems.append("modelo 6 tem q = 50")
            if self.error_kind != "t5":
                problems.append("modelo 6 usa erros t5")
            if not self.discretize_even:
                problems.append("modelo 6 discretiza as colunas pares")
        if self.model_id == "custom" and self.custom is not None and self.q != self.custom.q:
            problems.append(f"q={self.q} difere do modelo customizado (q={self.custom.q})")
        return problems

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> Dict[str, Any]:
        payload = {key: value for key, value in asdict(self).items() if key != "custom"}
        if self.custom is not None:
            payload["custom"] = self.custom.to_dict()
        return payload


# ----------------------------------------------------------------------
# Geradores
# ----------------------------------------------------------------------
def sample_ar1_gaussian(n: int, p: int, rho: float, rng: RngStream) -> np.ndarray:
    """Linhas i.i.d. N(0, Σ) com Σ_jk = ρ^|j-k|, pela recursão AR(1) nas colunas."""
    if not -1 < rho < 1:
        raise ConfigError(f"|rho| deve ser < 1 (recebido {rho})")
    z = rng.generator().standard_normal((n, p))
    innovation = math.sqrt(1.0 - rho * rho)
    # X_1 = Z_1; X_j = ρX_{j-1} + √(1-ρ²) Z_j
    z[:, 0] /= innovation
    return lfilter([innovation], [1.0, -rho], z, axis=1)


def discretize_even_columns(x: np.ndarray) -> np.ndarray:
    """Colunas pares (1-based) viram códigos 0/1/2 centrados; ímpares ficam intactas."""
    x = np.array(x, dtype=np.float64)
    even = x[:, 1::2]
    codes = np.where(even < 0, 0.0, np.where(even <= 1.5, 1.0, 2.0))
    x[:, 1::2] = codes - codes.mean(axis=0)
    return x


def _signed_uniform(generator: np.random.Generator, size: int) -> np.ndarray:
    """Sinal ±1 equiprovável vezes Uniforme(1, 2)."""
    signs = np.where(generator.random(size) < 0.5, 1.0, -1.0)
    return signs * generator.uniform(1.0, 2.0, size)


def build_truth(spec: SimModelSpec, rng: RngStream) -> GroundTruth:
    """Modelo verdadeiro; Modelos 5-6 sorteiam coeficientes novos a cada réplica."""

    q, p = spec.q, spec.p
    coef_main = np.zeros((p, q))
    coef_inter: Dict[Pair, np.ndarray] = {}
    intercept = np.zeros(q)
    indicator: Tuple[int, ...] = ()

    if spec.model_id == "custom":
        custom = spec.custom
        for j, values in custom.coef_main.items():
            coef_main[j] = values
        coef_inter = {pair: values.copy() for pair, values in custom.coef_inter.items()}
        intercept = custom.intercept.copy()
        indicator = custom.indicator_main
    elif spec.model_id in FIXED_MODELS:
        mains, pairs, indicator = FIXED_MODELS[spec.model_id]
        for j, value in mains.items():
            coef_main[j, 0] = value
        coef_inter = {pair: np.array([value]) for pair, value in pairs.items()}
    else:
        templates = MODEL5_TEMPLATES if spec.model_id == 5 else MODEL6_TEMPLATES
        generator = rng.generator()
        for r in range(q):
            mains, pairs = templates[r % len(templates)]
            draws = _signed_uniform(generator, len(mains) + len(pairs))
            for j, value in zip(mains, draws[: len(mains)]):
                coef_main[j, r] = value
            for pair, value in zip(pairs, draws[len(mains):]):
                coef_inter.setdefault(pair, np.zeros(q))[r] = value

    main_set = frozenset(int(j) for j in np.flatnonzero(np.any(coef_main != 0, axis=1)))
    pairs = frozenset(pair for pair, values in coef_inter.items() if np.any(values != 0))
    return GroundTruth(
        main_set=main_set,
        interaction_pairs=pairs,
        active_vars=frozenset(i for pair in pairs for i in pair),
        coef_main=coef_main,
        coef_inter={pair: coef_inter[pair] for pair in sorted(pairs)},
        intercept=intercept,
        indicator_main=frozenset(indicator),
    )


def _draw_x(spec: SimModelSpec, n: int, rng: RngStream) -> np.ndarray:
    """Covariáveis AR(1), discretizadas quando o modelo pede."""
    x = sample_ar1_gaussian(n, spec.p, spec.rho, rng)
    if spec.discretize_even:
        x = discretize_even_columns(x)
    return x


def _draw_errors(spec: SimModelSpec, n: int, rng: RngStream) -> np.ndarray:
    """Erros N(0, 1) ou t5, escalados pelo `noise_scale` do modelo customizado."""
    generator = rng.generator()
    if spec.error_kind == "t5":
        errors = generator.standard_t(5, size=(n, spec.q))
    else:
        errors = generator.standard_normal((n, spec.q))
    scale = spec.custom.noise_scale if spec.custom is not None else 1.0
    return scale * errors


def mean_response(x: np.ndarray, truth: GroundTruth) -> np.ndarray:
    """E[Y | x] do mecanismo gerador (indicadoras 1(x >= 0) onde declaradas)."""
    signal = np.array(x, dtype=np.float64)
    for j in truth.indicator_main:
        signal[:, j] = (x[:, j] >= 0).astype(np.float64)
    rows = sorted(truth.main_set)
    mean = signal[:, rows] @ truth.coef_main[rows] if rows else np.zeros((x.shape[0], truth.q))
    for (k, l), values in truth.coef_inter.items():
        mean = mean + np.outer(x[:, k] * x[:, l], values)
    return mean + truth.intercept


def gen_model(spec: SimModelSpec, replicate: int) -> Tuple[Dataset, Dataset, GroundTruth]:
    """(treino, teste, verdade) da réplica; tudo é regenerado a cada réplica."""

    stream = RngStream(spec.master_seed, replicate)
    truth = build_truth(spec, stream.substream(0))

    def draw(n: int, x_label: int, w_label: int) -> Dataset:
        x = _draw_x(spec, n, stream.substream(x_label))
        y = mean_response(x, truth) + _draw_errors(spec, n, stream.substream(w_label))
        return validate_dataset(x, y)

    return draw(spec.n, 1, 2), draw(spec.test_n, 3, 4), truth


# ----------------------------------------------------------------------
# Avaliação
# ----------------------------------------------------------------------
def _main_label(j: int) -> str:
    """Rótulo 1-based de efeito principal ("X12")."""
    return f"X{j + 1}"


def _pair_label(pair: Pair) -> str:
    """Rótulo 1-based de interação ("X1X2")."""
    return f"X{pair[0] + 1}X{pair[1] + 1}"


@dataclass
class ScreenEvaluation:
    """Flags de retenção por alvo verdadeiro."""
    main: Dict[str, bool]
    inter: Dict[str, bool]
    variables: Dict[str, bool]
    all: bool


def evaluate_screen(result: ScreenResult, truth: GroundTruth) -> ScreenEvaluation:
    """Principal j retido se j ∈ M̂ (união no modo união); par retido se ∈ Î."""

    if result.p and result.p != truth.coef_main.shape[0]:
        raise DataError(f"Triagem com p={result.p}, verdade com p={truth.coef_main.shape[0]}")
    mains = set(result.main_candidates)
    pairs = set(result.i_hat)
    inter_vars = set(result.union_set if result.union_set is not None else result.a_hat)

    main_flags = {_main_label(j): j in mains for j in sorted(truth.main_set)}
    inter_flags = {_pair_label(pair): pair in pairs for pair in sorted(truth.interaction_pairs)}
    variables = {
        _main_label(j): (j in truth.main_set and j in mains) or (j in truth.active_vars and j in inter_vars)
        for j in sorted(truth.main_set | truth.active_vars)
    }
    return ScreenEvaluation(
        main=main_flags,
        inter=inter_flags,
        variables=variables,
        all=all(main_flags.values()) and all(inter_flags.values()),
    )


@dataclass
class SelectEvaluation:
    pe: float
    fp_main: int
    fp_int: int
    fn_main: int
    fn_int: int


def evaluate_select(select, truth: GroundTruth, test: Dataset) -> SelectEvaluation:
    """PE no teste (média entre respostas) e FP/FN sobre a união dos suportes."""

    prediction = select.predict(np.asarray(test.x))
    pe = float(np.mean(np.mean((np.asarray(test.y) - prediction) ** 2, axis=0)))

    chosen = {term for support in select.per_response_support for term in support}
    chosen_main = {t.index[0] for t in chosen if t.kind == "main"}
    chosen_pairs = {t.index for t in chosen if t.kind == "inter"}
    return SelectEvaluation(
        pe=pe,
        fp_main=len(chosen_main - truth.main_set),
        fp_int=len(chosen_pairs - truth.interaction_pairs),
        fn_main=len(truth.main_set - chosen_main),
        fn_int=len(truth.interaction_pairs - chosen_pairs),
    )


@dataclass(eq=False)
class OracleFit:
    """MQO por resposta no suporte verdadeiro (indicadoras quando o modelo as usa)."""
    truth: GroundTruth
    per_response_support: List[List[Term]]
    coefs: List[np.ndarray]

    def _columns(self, x: np.ndarray, r: int) -> np.ndarray:
        """Intercepto, principais (ou indicadoras) e produtos do suporte da resposta r."""
        mains, pairs = self.truth.response_support(r)
        columns = [np.ones(x.shape[0])]
        for j in mains:
            columns.append((x[:, j] >= 0).astype(np.float64) if j in self.truth.indicator_main else x[:, j])
        columns += [x[:, k] * x[:, l] for k, l in pairs]
        return np.column_stack(columns)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.column_stack([self._columns(x, r) @ coef for r, coef in enumerate(self.coefs)])


def oracle_fit(train: Dataset, truth: GroundTruth) -> OracleFit:
    supports, coefs = [], []
    x, y = np.asarray(train.x), np.asarray(train.y)
    fit = OracleFit(truth, supports, coefs)
    for r in range(truth.q):
        mains, pairs = truth.response_support(r)
        supports.append([Term.main(j) for j in mains] + [Term.inter(k, l) for k, l in pairs])
        coef, *_ = np.linalg.lstsq(fit._columns(x, r), y[:, r], rcond=None)
        coefs.append(coef)
    return fit


# ----------------------------------------------------------------------
# Métodos
# ----------------------------------------------------------------------
SCREEN_METHODS: Dict[str, Dict[str, Any]] = {
    "ipdc": dict(baseline="none"),
    "sis2": dict(baseline="sis2"),
    "sis2_max": dict(baseline="sis2", sis_aggregate="max"),
    "sis2_sum": dict(baseline="sis2", sis_aggregate="sum"),
    "dcsis2": dict(baseline="dcsis2"),
    "dcsis_square": dict(baseline="dcsis_square"),
}
STAGES = ("_glasso_lasso", "_glasso", "_lasso")


def parse_method(method: str) -> Tuple[str, Optional[str]]:
    """"ipdc_glasso_lasso" -> ("ipdc", "glasso_lasso"); "oracle" -> ("oracle", None)."""
    if method == "oracle":
        return method, None
    for suffix in STAGES:
        if method.endswith(suffix) and method[: -len(suffix)] in SCREEN_METHODS:
            return method[: -len(suffix)], suffix[1:]
    if method in SCREEN_METHODS:
        return method, None
    raise ConfigError(f"método desconhecido: {method!r}")


def stage_config(stage: str, base: SelectConfig, q: int) -> SelectConfig:
    """glasso: sem refit; lasso: Lasso direto; glasso_lasso: group Lasso só com q > 1."""
    if stage == "glasso":
        return replace(base, group_step=True, refit=False)
    if stage == "lasso":
        return replace(base, group_step=False, refit=True)
    return replace(base, group_step=base.group_step and q > 1, refit=True)


@dataclass
class ReplicateRecord:
    replicate: int
    method: str
    screen: Optional[ScreenEvaluation] = None
    select: Optional[SelectEvaluation] = None
    converged: bool = True

    def as_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"method": self.method, "replicate": self.replicate}
        if self.screen is not None:
            row.update({f"main:{k}": float(v) for k, v in self.screen.main.items()})
            row.update({f"inter:{k}": float(v) for k, v in self.screen.inter.items()})
            row.update({f"var:{k}": float(v) for k, v in self.screen.variables.items()})
            row["all"] = float(self.screen.all)
        if self.select is not None:
            row.update({key: float(value) for key, value in asdict(self.select).items()})
        return row


def _screen_config(name: str, base: ScreenConfig) -> ScreenConfig:
    """Configuração da triagem com a linha de base do método."""
    return replace(base, **SCREEN_METHODS[name])


def run_replicate(
    spec: SimModelSpec,
    replicate: int,
    methods: Sequence[str],
    screen_cfg: ScreenConfig,
    select_cfg: SelectConfig,
) -> List[ReplicateRecord]:
    """Todos os métodos sobre os mesmos dados da réplica (BLAS em uma thread)."""

    with threadpool_limits(limits=1):
        train, test, truth = gen_model(spec, replicate)
        select_rng = RngStream(spec.master_seed, replicate).substream(100)
        screens: Dict[str, ScreenResult] = {}
        records = []
        for method in methods:
            name, stage = parse_method(method)
            if name == "oracle":
                records.append(ReplicateRecord(
                    replicate, method, select=evaluate_select(oracle_fit(train, truth), truth, test)
                ))
                continue
            if name not in screens:
                screens[name] = run_screen(train, _screen_config(name, screen_cfg), n_jobs=1)
            record = ReplicateRecord(replicate, method, screen=evaluate_screen(screens[name], truth))
            if stage is not None:
                result = run_select(train, screens[name], stage_config(stage, select_cfg, spec.q),
                                    rng=select_rng, n_jobs=1)
                record.select = evaluate_select(result, truth, test)
                record.converged = result.converged
            records.append(record)
    return records


# ----------------------------------------------------------------------
# Relatório
# ----------------------------------------------------------------------
@dataclass(eq=False)
class SimReport:
    """Registros por réplica e agregados (média, erro padrão) por método."""
    spec: SimModelSpec
    methods: List[str]
    records: List[ReplicateRecord]
    means: pd.DataFrame = field(init=False)
    standard_errors: pd.DataFrame = field(init=False)

    def __post_init__(self):
        frame = pd.DataFrame([record.as_row() for record in self.records])
        grouped = frame.drop(columns="replicate").groupby("method", sort=False)
        self.means = grouped.mean().reindex(self.methods)
        counts = grouped.size().reindex(self.methods)
        spread = grouped.std(ddof=1).reindex(self.methods).fillna(0.0)
        self.standard_errors = spread.div(np.sqrt(counts), axis=0).where(self.means.notna())

    @property
    def nonconverged(self) -> int:
        return sum(not record.converged for record in self.records)

    def table(self) -> pd.DataFrame:
        """Métodos × métricas, com colunas `<métrica>_se` intercaladas."""
        columns = {}
        for metric in self.means.columns:
            columns[metric] = self.means[metric]
            columns[f"{metric}_se"] = self.standard_errors[metric]
        table = pd.DataFrame(columns, index=self.means.index)
        table.index.name = "method"
        return table

    def to_csv(self, path: PathLike) -> None:
        atomic_write_text(path, self.table().to_csv(float_format="%.4f", lineterminator="\n"))

    def to_dict(self) -> Dict[str, Any]:
        def clean(value):
            return None if value is None or (isinstance(value, float) and math.isnan(value)) else value

        aggregates = {
            method: {
                metric: {"mean": clean(float(self.means.at[method, metric])),
                         "se": clean(float(self.standard_errors.at[method, metric]))}
                for metric in self.means.columns
            }
            for method in self.methods
        }
        return {
            "version": VERSION,
            "spec": self.spec.to_dict(),
            "methods": list(self.methods),
            "replicates": self.spec.replicates,
            "nonconverged_fits": self.nonconverged,
            "aggregates": aggregates,
            "records": [{key: clean(value) for key, value in record.as_row().items()} for record in self.records],
        }


def run_monte_carlo(
    spec: SimModelSpec,
    methods: Sequence[str],
    screen_cfg: Optional[ScreenConfig] = None,
    select_cfg: Optional[SelectConfig] = None,
    n_jobs: int = 1,
) -> SimReport:
    """Réplica r usa RngStream(master_seed, r); resultado independe de n_jobs."""

    spec.validate()
    if not methods:
        raise ConfigError("nenhum método informado")
    for method in methods:
        parse_method(method)
    screen_cfg = screen_cfg or ScreenConfig(union_mode=spec.q > 1)
    screen_cfg.validate()
    select_cfg = select_cfg or SelectConfig()
    select_cfg.validate()

    logger.info(f"Simulação: modelo {spec.model_id}, n={spec.n}, p={spec.p}, rho={spec.rho}, "
                f"{spec.replicates} réplicas, métodos={list(methods)}")

    replicates = range(spec.replicates)
    if n_jobs == 1:
        batches: Iterable[List[ReplicateRecord]] = (
            run_replicate(spec, r, methods, screen_cfg, select_cfg) for r in replicates
        )
    else:
        batches = Parallel(n_jobs=n_jobs, return_as="generator")(
            delayed(run_replicate)(spec, r, methods, screen_cfg, select_cfg) for r in replicates
        )

    records: List[ReplicateRecord] = []
    for done, batch in enumerate(batches, start=1):
        records.extend(batch)
        logger.info(f"Réplica {done}/{spec.replicates} concluída")

    report = SimReport(spec=spec, methods=list(methods), records=records)
    if report.nonconverged:
        logger.warning(f"{report.nonconverged} ajuste(s) sem convergência")
    logger.info("✓ Simulação concluída")
    return report


# ----------------------------------------------------------------------
# Experimento da transformação quadrática
# ----------------------------------------------------------------------
@dataclass
class SquareTransformPoint:
    rho: float
    dcorr_raw: float
    dcorr_square: float


def square_transform_experiment(
    n: int = 200,
    p: int = 50,
    rhos: Sequence[float] = (0.3, 0.5, 0.7),
    replicates: int = 200,
    master_seed: int = 0,
) -> List[SquareTransformPoint]:
    """Y = X1X2 + W: média de dcorr(X1, Y) contra dcorr(X1², Y²) por ρ."""

    points = []
    for index, rho in enumerate(rhos):
        raw, square = [], []
        for r in range(replicates):
            stream = RngStream(master_seed, r, (index,))
            x = sample_ar1_gaussian(n, p, rho, stream.substream(0))
            y = x[:, 0] * x[:, 1] + stream.substream(1).generator().standard_normal(n)
            raw.append(sample_dcorr(SampleCloud.of(x[:, 0]), SampleCloud.of(y)))
            square.append(sample_dcorr(SampleCloud.of(square_transform(x[:, 0])), SampleCloud.of(y * y)))
        points.append(SquareTransformPoint(float(rho), float(np.mean(raw)), float(np.mean(square))))
        logger.info(f"rho={rho}: dcorr(X1, Y)={points[-1].dcorr_raw:.3f}, "
                    f"dcorr(X1², Y²)={points[-1].dcorr_square:.3f}")
    return points
