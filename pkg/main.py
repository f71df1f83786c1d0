"""CLI - Triagem de interações, seleção e simulação em lote.

Subcomandos:
    dcorr     covariância/correlação de distância entre dois CSVs (JSON no stdout)
    screen    triagem IPDC (ou linha de base) -> JSON
    select    group Lasso + limiarização + Lasso por resposta -> JSON
    simulate  estudo Monte Carlo -> JSON + tabela CSV

Códigos de saída: 0 sucesso, 2 configuração, 3 dados, 4 sem convergência.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import CV_FOLDS, DEGENERATE_TOL, VERSION, logger, resolve_threads
from data_model import (
    ConfigError,
    ConvergenceError,
    DataError,
    IPDCError,
    RngStream,
    atomic_write_text,
    load_csv,
    load_dataset,
)
from dcov_engine import SampleCloud, sample_dcov2, sample_dcov2_oracle
from screening import ScreenConfig, ScreenResult, run_screen
from selection import SelectConfig, run_select
from simulation import (
    CustomModel,
    SimModelSpec,
    parse_method,
    run_monte_carlo,
    square_transform_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4

DEFAULT_METHODS = "ipdc,sis2_max,dcsis2"


# --- Utilitários ---

def _dump(payload: Dict[str, Any]) -> str:
    """JSON indentado, UTF-8 literal, com quebra de linha final."""
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def _write_json(path: str, payload: Dict[str, Any]) -> None:
    """Grava o JSON de forma atômica."""
    atomic_write_text(path, _dump(payload))
    logger.info(f"✓ Resultado gravado em {path}")


def _parse_size(value: str) -> Optional[int]:
    """"auto" -> None; inteiro positivo caso contrário."""
    if value.strip().lower() == "auto":
        return None
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tamanho inválido: {value!r} (use inteiro ou auto)") from None


def _parse_lambda(value: str) -> Optional[float]:
    """"cv" -> None (validação cruzada); número -> lambda fixo."""
    if value.strip().lower() == "cv":
        return None
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda inválido: {value!r} (use cv ou número)") from None


def _parse_model(value: str):
    """Número do modelo (1-6) ou "custom"."""
    if value == "custom":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"modelo inválido: {value!r}") from None


def screen_config_from_args(args: argparse.Namespace, union_default: bool = False) -> ScreenConfig:
    union = args.union if args.union is not None else union_default
    return ScreenConfig(
        rule="top_k" if args.rule == "topk" else "threshold",
        tau1=args.tau1,
        tau2=args.tau2,
        d_main=args.d_main if args.d_main is not None else args.d,
        d_inter=args.d_inter if args.d_inter is not None else args.d,
        union_mode=union,
        baseline="none" if args.baseline == "ipdc" else args.baseline,
        sis_aggregate=args.sis_aggregate,
    )


def select_config_from_args(args: argparse.Namespace) -> SelectConfig:
    return SelectConfig(
        lambda_mode="cv" if args.lam is None else "fixed",
        lambda_value=args.lam,
        cv_folds=args.folds,
        threshold=args.threshold,
        standardize=args.standardize,
        group_step=args.group_step,
        refit=args.refit,
    )


# --- Subcomandos ---

def dcorr_report(u: SampleCloud, v: SampleCloud) -> Dict[str, float]:
    """Termos da forma V e dcorr; n = 2 é aceito pela avaliação literal."""
    estimator = sample_dcov2 if u.n >= 3 else sample_dcov2_oracle
    terms = estimator(u, v)
    var_u = estimator(u, u).dcov2
    var_v = estimator(v, v).dcov2
    if var_u < DEGENERATE_TOL or var_v < DEGENERATE_TOL:
        dcorr = 0.0
    else:
        dcorr = float(np.sqrt(terms.dcov2) / (var_u * var_v) ** 0.25)
    return {"dcov2": terms.dcov2, "dcorr": dcorr, "s1": terms.s1, "s2": terms.s2, "s3": terms.s3}


def cmd_dcorr(args: argparse.Namespace) -> int:
    u_table = load_csv(args.x, has_header=args.header)
    v_table = load_csv(args.y, has_header=args.header)
    if u_table.values.shape[0] != v_table.values.shape[0]:
        raise DataError(f"{args.x} tem {u_table.values.shape[0]} linhas e {args.y} tem {v_table.values.shape[0]}")
    if u_table.values.shape[0] < 2:
        raise DataError("São necessárias pelo menos 2 observações")
    report = dcorr_report(SampleCloud(u_table.values), SampleCloud(v_table.values))
    sys.stdout.write(_dump(report))
    return EXIT_OK


def cmd_screen(args: argparse.Namespace) -> int:
    cfg = screen_config_from_args(args)
    n_jobs = resolve_threads(args.threads)
    cfg.validate()

    data = load_dataset(args.x, args.y, has_header=args.header)
    result = run_screen(data, cfg, n_jobs=n_jobs)
    _write_json(args.out, result.to_dict())
    return EXIT_OK


def _load_screen(path: str) -> ScreenResult:
    """Lê o JSON gravado por `screen`; falhas viram DataError."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"Falha ao ler resultado de triagem {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError(f"Resultado de triagem malformado: {path}")
    return ScreenResult.from_dict(payload)


def cmd_select(args: argparse.Namespace) -> int:
    cfg = select_config_from_args(args)
    n_jobs = resolve_threads(args.threads)
    problems = cfg.problems()
    if not 0 <= args.seed < 2**64:
        problems.append("seed deve ser inteiro de 64 bits sem sinal")
    if problems:
        raise ConfigError(problems)

    screen = _load_screen(args.screen)
    data = load_dataset(args.x, args.y, has_header=args.header)
    result = run_select(data, screen, cfg, rng=RngStream(args.seed, 0), n_jobs=n_jobs)

    payload = result.to_dict()
    payload["config"] = {key: value for key, value in vars(cfg).items()}
    _write_json(args.out, payload)
    if not result.converged:
        raise ConvergenceError(
            f"Group Lasso não convergiu (KKT={result.fit.kkt_violation:.2e}); diagnósticos gravados em {args.out}"
        )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    n_jobs = resolve_threads(args.threads)
    csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))

    if args.experiment == "square-transform":
        points = square_transform_experiment(
            n=args.n or 200, p=args.p or 50, rhos=args.rhos, replicates=args.reps or 200,
            master_seed=args.seed,
        )
        payload = {"version": VERSION, "experiment": "square-transform",
                   "points": [vars(point) for point in points]}
        lines = ["rho,dcorr_raw,dcorr_square"]
        lines += [f"{pt.rho:.4f},{pt.dcorr_raw:.4f},{pt.dcorr_square:.4f}" for pt in points]
        _write_json(args.out, payload)
        atomic_write_text(csv_path, "\n".join(lines) + "\n")
        return EXIT_OK

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    problems: List[str] = []
    for method in methods:
        try:
            parse_method(method)
        except ConfigError as exc:
            problems.extend(exc.problems)

    custom = CustomModel.from_json(args.custom_model) if args.custom_model else None
    try:
        spec = SimModelSpec.for_model(
            args.model, custom=custom, n=args.n, p=args.p, rho=args.rho,
            replicates=args.reps, test_n=args.test_n, error_kind=args.error_kind,
            master_seed=args.seed,
        )
    except ConfigError as exc:
        problems.extend(exc.problems)
        spec = None

    screen_cfg = screen_config_from_args(args, union_default=bool(spec and spec.q > 1))
    select_cfg = select_config_from_args(args)
    problems += screen_cfg.problems() + select_cfg.problems()
    if problems:
        raise ConfigError(problems)

    report = run_monte_carlo(spec, methods, screen_cfg, select_cfg, n_jobs=n_jobs)
    _write_json(args.out, report.to_dict())
    report.to_csv(csv_path)
    logger.info(f"✓ Tabela gravada em {csv_path}")
    if report.nonconverged:
        raise ConvergenceError(f"{report.nonconverged} ajuste(s) sem convergência; relatório gravado")
    return EXIT_OK


# --- Parser ---

def _add_data_args(parser: argparse.ArgumentParser) -> None:
    """Argumentos --x, --y e --header."""
    parser.add_argument("--x", required=True, help="CSV das covariáveis (linhas = observações)")
    parser.add_argument("--y", required=True, help="CSV das respostas")
    parser.add_argument("--header", action="store_true", help="primeira linha é cabeçalho")


def _add_screen_args(parser: argparse.ArgumentParser) -> None:
    """Opções da triagem."""
    group = parser.add_argument_group("triagem")
    group.add_argument("--rule", choices=("topk", "threshold"), default="topk")
    group.add_argument("--d", type=_parse_size, default=None, help="tamanho de M̂ e Â (inteiro ou auto)")
    group.add_argument("--d-main", type=_parse_size, default=None)
    group.add_argument("--d-inter", type=_parse_size, default=None)
    group.add_argument("--tau1", type=float, default=None)
    group.add_argument("--tau2", type=float, default=None)
    group.add_argument("--union", action=argparse.BooleanOptionalAction, default=None,
                       help="modo união (padrão: ligado quando q > 1 na simulação)")
    group.add_argument("--baseline", choices=("ipdc", "none", "sis2", "dcsis2", "dcsis_square"), default="ipdc")
    group.add_argument("--sis-aggregate", choices=("max", "sum"), default="max")


def _add_select_args(parser: argparse.ArgumentParser) -> None:
    """Opções da seleção."""
    group = parser.add_argument_group("seleção")
    group.add_argument("--lambda", dest="lam", type=_parse_lambda, default=None, help="cv ou valor fixo")
    group.add_argument("--folds", type=int, default=CV_FOLDS)
    group.add_argument("--threshold", type=float, default=None, help="limiar t das linhas de B̂")
    group.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    group.add_argument("--group-step", action=argparse.BooleanOptionalAction, default=True)
    group.add_argument("--refit", action=argparse.BooleanOptionalAction, default=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipdc", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    dcorr = sub.add_parser("dcorr", help="dcov²/dcorr entre dois CSVs")
    _add_data_args(dcorr)
    dcorr.set_defaults(handler=cmd_dcorr)

    screen = sub.add_parser("screen", help="triagem de efeitos principais e interações")
    _add_data_args(screen)
    screen.add_argument("--out", required=True)
    screen.add_argument("--threads", default=None)
    _add_screen_args(screen)
    screen.set_defaults(handler=cmd_screen)

    select = sub.add_parser("select", help="seleção no espaço reduzido")
    _add_data_args(select)
    select.add_argument("--screen", required=True, help="JSON gravado por `screen`")
    select.add_argument("--out", required=True)
    select.add_argument("--seed", type=int, default=0)
    select.add_argument("--threads", default=None)
    _add_select_args(select)
    select.set_defaults(handler=cmd_select)

    simulate = sub.add_parser("simulate", help="estudo Monte Carlo")
    simulate.add_argument("--experiment", choices=("monte-carlo", "square-transform"), default="monte-carlo")
    simulate.add_argument("--model", type=_parse_model, default=1)
    simulate.add_argument("--custom-model", default=None, help="JSON do modelo customizado")
    simulate.add_argument("--n", type=int, default=None)
    simulate.add_argument("--p", type=int, default=None)
    simulate.add_argument("--rho", type=float, default=None)
    simulate.add_argument("--rhos", type=lambda s: [float(v) for v in s.split(",")], default=[0.3, 0.5, 0.7])
    simulate.add_argument("--reps", type=int, default=None)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--test-n", type=int, default=None)
    simulate.add_argument("--error-kind", choices=("gaussian_unit", "t5"), default=None)
    simulate.add_argument("--methods", default=DEFAULT_METHODS, help="lista separada por vírgulas")
    simulate.add_argument("--out", required=True, help="JSON do relatório")
    simulate.add_argument("--csv", default=None, help="tabela CSV (padrão: mesmo nome com .csv)")
    simulate.add_argument("--threads", default=None)
    _add_screen_args(simulate)
    _add_select_args(simulate)
    simulate.set_defaults(handler=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    start_time = time.perf_counter()
    try:
        code = args.handler(args)
    except ConfigError as exc:
        for problem in exc.problems:
            logger.error(f"Configuração inválida: {problem}")
        return EXIT_CONFIG
    except DataError as exc:
        logger.error(f"Erro de dados: {exc}")
        return EXIT_DATA
    except ConvergenceError as exc:
        logger.error(str(exc))
        return EXIT_CONVERGENCE
    except IPDCError:
        logger.exception("Erro não tratado no pipeline")
        return EXIT_DATA

    latency = time.perf_counter() - start_time
    logger.info(f"✓ {args.command} concluído em {latency:.2f} s")
    return code


if __name__ == "__main__":
    sys.exit(main())
