"""Data Model - Tipos de domínio, ingestão de CSV e fluxos de RNG."""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import DEGENERATE_TOL, logger


PathLike = Union[str, Path]
Pair = Tuple[int, int]


# ----------------------------------------------------------------------
# Erros
# ----------------------------------------------------------------------
class IPDCError(Exception):
    """Erro base do pipeline."""


class ConfigError(IPDCError):
    """Configuração inconsistente; carrega todos os problemas de uma vez."""

    def __init__(self, problems: Union[str, Sequence[str]]):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


class DataError(IPDCError):
    """Falha de leitura, validação ou dimensão dos dados."""


class ConvergenceError(IPDCError):
    """Solver não convergiu dentro do limite de iterações."""


# ----------------------------------------------------------------------
# Tipos de domínio
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class CsvTable:
    """Matriz lida de um CSV, com nomes de coluna opcionais."""
    values: np.ndarray
    names: Optional[List[str]] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariáveis x (n×p) e respostas y (n×q), imutáveis após a construção."""
    x: np.ndarray
    y: np.ndarray
    feature_names: Optional[Tuple[str, ...]] = None
    response_names: Optional[Tuple[str, ...]] = None
    degenerate: Tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Modelo verdadeiro de uma simulação (índices 0-based).

    `indicator_main` lista colunas que entram na geração como 1(x >= 0) mas
    são tratadas como efeitos principais lineares pelo modelo de trabalho.
    """
    main_set: FrozenSet[int]
    interaction_pairs: FrozenSet[Pair]
    active_vars: FrozenSet[int]
    coef_main: np.ndarray
    coef_inter: Dict[Pair, np.ndarray]
    intercept: np.ndarray
    indicator_main: FrozenSet[int] = frozenset()

    def __post_init__(self):
        for k, l in self.interaction_pairs:
            if not k < l:
                raise DataError(f"Par de interação ({k}, {l}) deve ter k < l")
        union = {i for pair in self.interaction_pairs for i in pair}
        if union != set(self.active_vars):
            raise DataError("active_vars deve ser a união dos índices dos pares de interação")

    @property
    def q(self) -> int:
        return self.coef_main.shape[1]

    def response_support(self, r: int) -> Tuple[List[int], List[Pair]]:
        """Efeitos principais e pares com coeficiente não nulo na resposta r."""
        mains = [int(j) for j in np.flatnonzero(self.coef_main[:, r])]
        pairs = sorted(pair for pair, coef in self.coef_inter.items() if coef[r] != 0)
        return mains, pairs


@dataclass(frozen=True)
class RngStream:
    """Fluxo aleatório endereçado por (master_seed, stream_id).

    Usa `SeedSequence` com `spawn_key` e o gerador contador Philox: o mesmo
    par reproduz a sequência bit a bit, pares distintos são independentes.
    """
    master_seed: int
    stream_id: int
    path: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64 or not 0 <= self.stream_id < 2**64:
            raise ConfigError("master_seed e stream_id devem ser inteiros de 64 bits sem sinal")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.stream_id,) + self.path,
        )

    def generator(self) -> np.random.Generator:
        """Novo gerador posicionado no início do fluxo."""
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def substream(self, label: int) -> "RngStream":
        """Fluxo filho determinístico (dados, coeficientes, folds...)."""
        return RngStream(self.master_seed, self.stream_id, self.path + (int(label),))

    def random_state(self) -> int:
        """Semente inteira para APIs que só aceitam `random_state` (ex.: KFold)."""
        return int(self.seed_sequence().generate_state(1, dtype=np.uint32)[0])


# ----------------------------------------------------------------------
# Ingestão
# ----------------------------------------------------------------------
def load_csv(path: PathLike, has_header: bool = False) -> CsvTable:
    """Lê um CSV numérico denso (linhas = observações).

    Erros indicam linha e coluna (1-based, contando apenas linhas de dados).
    """

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"Falha ao ler {path}: {exc}") from exc

    if not text.strip():
        raise DataError(f"Arquivo vazio: {path}")

    try:
        frame = pd.read_csv(
            io.StringIO(text),
            header=0 if has_header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"Arquivo vazio: {path}") from exc
    except pd.errors.ParserError as exc:
        raise DataError(f"Linhas com número de campos diferente em {path}: {exc}") from exc

    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise DataError(f"Arquivo sem linhas de dados: {path}")

    # Campos ausentes em linhas curtas chegam como NaN (não como string)
    short = frame.isna().to_numpy()
    if short.any():
        row = int(np.argwhere(short)[0][0]) + 1
        raise DataError(f"Linha {row} de {path} tem menos campos que o cabeçalho/primeira linha")

    values = np.empty(frame.shape, dtype=np.float64)
    for col_idx, column in enumerate(frame.columns):
        cells = frame[column].str.strip()
        parsed = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(
                f"Valor não numérico ou não finito {frame.iat[row, col_idx]!r} "
                f"em {path}: linha {row + 1}, coluna {col_idx + 1}"
            )
        # Conversão final com arredondamento correto (a de pandas pode diferir em 1 ulp)
        values[:, col_idx] = cells.to_numpy(dtype=str).astype(np.float64)

    names = [str(c).strip() for c in frame.columns] if has_header else None
    logger.debug(f"CSV {path} carregado: {values.shape[0]}×{values.shape[1]}")
    return CsvTable(values=values, names=names)


def atomic_write_text(path: PathLike, text: str) -> None:
    """Escreve em arquivo temporário e renomeia; nunca deixa saída parcial."""

    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def save_csv(path: PathLike, values: np.ndarray, names: Optional[Sequence[str]] = None) -> None:
    """Serializa com a menor representação decimal que reproduz cada double."""

    matrix = np.atleast_2d(np.asarray(values, dtype=np.float64))
    lines = []
    if names is not None:
        lines.append(",".join(names))
    lines.extend(",".join(repr(float(v)) for v in row) for row in matrix)
    atomic_write_text(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# Validação
# ----------------------------------------------------------------------
def _as_matrix(values, what: str) -> np.ndarray:
    """Converte para matriz 2-D float64 (vetor vira uma coluna)."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise DataError(f"{what} deve ser uma matriz 2-D (recebido ndim={matrix.ndim})")
    return matrix


def zero_variance_columns(x: np.ndarray) -> Tuple[int, ...]:
    """Colunas cuja variância amostral é numericamente nula."""
    return tuple(int(j) for j in np.flatnonzero(np.var(x, axis=0) < DEGENERATE_TOL))


def validate_dataset(
    x,
    y,
    feature_names: Optional[Sequence[str]] = None,
    response_names: Optional[Sequence[str]] = None,
) -> Dataset:
    """Monta um Dataset validado; colunas constantes são sinalizadas, não removidas."""

    x = _as_matrix(x, "x")
    y = _as_matrix(y, "y")

    if x.shape[0] != y.shape[0]:
        raise DataError(f"x tem {x.shape[0]} linhas e y tem {y.shape[0]}")
    if x.shape[0] < 3:
        raise DataError(f"São necessárias pelo menos 3 observações (n={x.shape[0]})")
    if x.shape[1] < 1 or y.shape[1] < 1:
        raise DataError("x e y precisam de pelo menos uma coluna")
    for name, matrix in (("x", x), ("y", y)):
        bad = ~np.isfinite(matrix)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise DataError(f"{name} tem valor não finito na linha {row + 1}, coluna {col + 1}")

    if feature_names is not None and len(feature_names) != x.shape[1]:
        raise DataError(f"{len(feature_names)} nomes para {x.shape[1]} covariáveis")
    if response_names is not None and len(response_names) != y.shape[1]:
        raise DataError(f"{len(response_names)} nomes para {y.shape[1]} respostas")

    degenerate = zero_variance_columns(x)
    if degenerate:
        logger.warning(f"{len(degenerate)} coluna(s) com variância zero sinalizadas: "
                       f"{[j + 1 for j in degenerate[:10]]}")

    x = x.copy()
    y = y.copy()
    x.flags.writeable = False
    y.flags.writeable = False

    return Dataset(
        x=x,
        y=y,
        feature_names=tuple(feature_names) if feature_names is not None else None,
        response_names=tuple(response_names) if response_names is not None else None,
        degenerate=degenerate,
    )


def load_dataset(x_path: PathLike, y_path: PathLike, has_header: bool = False) -> Dataset:
    """Atalho: dois CSVs (covariáveis e respostas) para um Dataset validado."""
    x_table = load_csv(x_path, has_header=has_header)
    y_table = load_csv(y_path, has_header=has_header)
    return validate_dataset(x_table.values, y_table.values, x_table.names, y_table.names)
