"""Configuração centralizada com defaults seguros para execuções reprodutíveis."""

from __future__ import annotations

import logging
import os
from typing import List, Optional, Union

from dotenv import load_dotenv


load_dotenv(override=True)

VERSION = "1.0.0"


# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger("ipdc")


def _env_float(name: str, default: float) -> float:
    """Lê um float do ambiente; valor inválido vira o padrão com aviso."""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning(f"{name}={raw!r} não é numérico; usando {default}")
        return default


def _env_int(name: str, default: int) -> int:
    """Lê um inteiro do ambiente; valor inválido vira o padrão com aviso."""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"{name}={raw!r} não é inteiro; usando {default}")
        return default


# Paralelismo
THREADS = os.getenv("IPDC_THREADS", "auto").strip().lower()

# Núcleo numérico
DEGENERATE_TOL = _env_float("IPDC_DEGENERATE_TOL", 1e-12)

# Group Lasso (descida por blocos)
GLASSO_TOL = _env_float("IPDC_GLASSO_TOL", 1e-8)
GLASSO_MAX_SWEEPS = _env_int("IPDC_GLASSO_MAX_SWEEPS", 10_000)
KKT_TOL = _env_float("IPDC_KKT_TOL", 1e-6)
GLASSO_GRID_POINTS = _env_int("IPDC_GLASSO_GRID_POINTS", 50)
GLASSO_GRID_RATIO = _env_float("IPDC_GLASSO_GRID_RATIO", 1e-2)

# Lasso por resposta (refit) e validação cruzada
CV_FOLDS = _env_int("IPDC_CV_FOLDS", 5)
LASSO_GRID_POINTS = _env_int("IPDC_LASSO_GRID_POINTS", 100)
LASSO_GRID_RATIO = _env_float("IPDC_LASSO_GRID_RATIO", 1e-3)

# Simulação
TEST_N = _env_int("IPDC_TEST_N", 10_000)
DEFAULT_P = _env_int("IPDC_DEFAULT_P", 500)
DEFAULT_REPLICATES = _env_int("IPDC_REPLICATES", 50)


def resolve_threads(value: Optional[Union[str, int]] = None) -> int:
    """Converte `--threads` (ou IPDC_THREADS) em `n_jobs` do joblib.

    "auto" vira -1 (todos os núcleos). O resultado nunca altera os números
    produzidos, apenas o tempo de execução.
    """

    raw = THREADS if value is None else value
    if isinstance(raw, int):
        return raw if raw >= 1 else 1
    text = str(raw).strip().lower()
    if text in ("", "auto"):
        return -1
    try:
        threads = int(text)
    except ValueError:
        logger.warning(f"Valor de threads inválido ({raw!r}); usando auto")
        return -1
    return threads if threads >= 1 else 1


def validate_config() -> List[str]:
    """Valida configurações críticas, retornando avisos ao invés de erros."""

    warnings = []

    if THREADS != "auto":
        try:
            if int(THREADS) < 1:
                warnings.append("IPDC_THREADS deve ser >= 1; usando 1.")
        except ValueError:
            warnings.append(f"IPDC_THREADS={THREADS!r} inválido; usando auto.")

    if not 0 < GLASSO_TOL < 1:
        warnings.append("IPDC_GLASSO_TOL fora de (0, 1); o solver pode não parar.")

    if not 0 < LASSO_GRID_RATIO < 1 or not 0 < GLASSO_GRID_RATIO < 1:
        warnings.append("Razões de grade de lambda devem estar em (0, 1).")

    if CV_FOLDS < 2:
        warnings.append("IPDC_CV_FOLDS < 2; a validação cruzada vai falhar.")

    for warning in warnings:
        logger.warning(warning)

    if not warnings:
        logger.debug(f"✓ Configurações validadas (threads={THREADS}, kkt_tol={KKT_TOL:g})")

    return warnings


if __name__ != "__main__":
    validate_config()
