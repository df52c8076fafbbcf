# cli.py
"""Superficie de línea de comandos: run, sweep, stats, presets.

Códigos de salida: 0 éxito, 1 configuración/validación inválida, 2 fallo de una celda en ejecución.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

import config as settings
from config import list_presets, parse_config
from errors import AdjacencyFormatError, ConfigError, InterferenceError, OutputError
from harness import AggregateResult, CellResult, ExperimentConfig, instance_for, reference_rates, run_cell, sweep
from instances import load_adjacency_dir, summary_stats, summary_table

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["experiment", "policy", "series", "t", "cum_regret", "per_individual_regret"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


# ----------------- CSV -----------------
def _rows(result: AggregateResult, series: str, cum: np.ndarray, per_individual: np.ndarray,
          stride: int) -> pd.DataFrame:
    T = cum.shape[0]
    idx = np.arange(stride - 1, T, stride)
    if T and idx[-1] != T - 1:
        idx = np.append(idx, T - 1)  # la última ronda siempre va
    return pd.DataFrame({
        "experiment": result.experiment,
        "policy": result.policy,
        "series": series,
        "t": idx + 1,
        "cum_regret": cum[idx],
        "per_individual_regret": per_individual[idx],
    }, columns=CSV_COLUMNS)


def _stride_for(stride: Union[int, Mapping[str, int]], experiment: str) -> int:
    if isinstance(stride, Mapping):
        return int(stride.get(experiment, 1))
    return int(stride)


def results_frame(results: Sequence[AggregateResult], stride: Union[int, Mapping[str, int]] = 1,
                  replicates: bool = False) -> pd.DataFrame:
    """Una tabla larga; `stride` puede ser global o por experimento."""
    frames = []
    for res in results:
        step = _stride_for(stride, res.experiment)
        frames.append(_rows(res, "mean", res.mean, res.per_individual_mean, step))
        frames.append(_rows(res, "std", res.std, res.per_individual_std, step))
        if replicates:
            per_individual = res.per_individual_curves
            for r in range(res.n_runs):
                frames.append(_rows(res, str(r), res.curves[r], per_individual[r], step))
    if not frames:
        return pd.DataFrame(columns=CSV_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def emit_csv(results: Sequence[AggregateResult], path: Union[str, Path], stride: Union[int, Mapping[str, int]] = 1,
             replicates: bool = False) -> Path:
    df = results_frame(results, stride=stride, replicates=replicates)
    numeric = df[["cum_regret", "per_individual_regret"]].to_numpy(dtype=float)
    if not np.all(np.isfinite(numeric)):
        raise OutputError("refusing to write non-finite regret values")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror or e}") from e
    logger.info("wrote %d rows to %s", len(df), path)
    return path


def _output_path(args, configs: List[ExperimentConfig]) -> Path:
    if args.output:
        return Path(args.output)
    if len(configs) == 1 and configs[0].output:
        return Path(configs[0].output)
    return Path(settings.OUTPUT_DIR) / f"{Path(args.config).stem}.csv"


def _override(configs: List[ExperimentConfig], args) -> List[ExperimentConfig]:
    update = {}
    if args.n_runs is not None:
        update["n_runs"] = args.n_runs
    if args.horizon is not None:
        update["T"] = args.horizon
    if not update:
        return configs
    # vuelve a validar para respetar las cotas del modelo
    return [ExperimentConfig.model_validate({**c.model_dump(by_alias=True), **update}) for c in configs]


def _report(cell: CellResult) -> None:
    if cell.failed:
        print(f"[ERROR] {cell.id}: {cell.error}")
        return
    for res in cell.results:
        print(f"[OK] {cell.id}/{res.policy}: final mean regret {res.mean[-1]:.4f} "
              f"(± {res.std[-1]:.4f}, per individual {res.per_individual_mean[-1]:.6f})")


def _write_rates(configs: List[ExperimentConfig], csv_path: Path) -> Path:
    frames = []
    for c in configs:
        df = reference_rates(instance_for(c, 0), c.T)
        df.insert(0, "experiment", c.id)
        frames.append(df)
    path = csv_path.with_name(f"{csv_path.stem}.rates.csv")
    try:
        pd.concat(frames, ignore_index=True).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror or e}") from e
    return path


# ----------------- comandos -----------------
def cmd_run(args) -> int:
    configs = _override(parse_config(args.config), args)
    cells = []
    for c in configs:
        try:
            cell = run_cell(c, workers=args.workers, progress=sys.stderr.isatty())
        except InterferenceError as e:
            print(f"[ERROR] {c.id}: {e}")
            return EXIT_RUNTIME
        _report(cell)
        cells.append(cell)
    return _finish(args, configs, cells)


def cmd_sweep(args) -> int:
    configs = _override(parse_config(args.config), args)
    cells = sweep(configs, workers=args.workers)
    for cell in cells:
        _report(cell)
    code = _finish(args, configs, cells)
    return EXIT_RUNTIME if any(c.failed for c in cells) else code


def _finish(args, configs: List[ExperimentConfig], cells: List[CellResult]) -> int:
    path = _output_path(args, configs)
    results = [r for cell in cells if not cell.failed for r in cell.results]
    stride = {cfg.id: cfg.stride for cfg in configs}
    emit_csv(results, path, stride=stride, replicates=args.replicates)
    print(f"[DONE] {len(results)} series written to {path}")
    if args.rates:
        print(f"[DONE] reference rates written to {_write_rates(configs, path)}")
    return EXIT_OK


def cmd_stats(args) -> int:
    networks = load_adjacency_dir(args.directory)
    if not networks:
        print(f"[WARN] no adjacency files in {args.directory}")
        return EXIT_VALIDATION
    summaries = [summary_stats(n) for n in networks]
    for s in summaries:
        print(f"[OK] {s.name}: d={s.d}, max degree={s.max_degree}, fractional sparsity={s.fractional_sparsity:.4f}")
    print(summary_table(summaries).to_string())
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in list_presets():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interference", description="Bandits bajo interferencia de red dispersa.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, helptext in (("run", cmd_run, "run every cell, stop at the first failure"),
                                 ("sweep", cmd_sweep, "run cells independently, isolating failures")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="YAML config file or preset name")
        p.add_argument("--output", help="CSV path (default: config output or $INTERFERENCE_OUTPUT_DIR)")
        p.add_argument("--n-runs", type=int, dest="n_runs")
        p.add_argument("--horizon", type=int)
        p.add_argument("--workers", type=int, default=settings.WORKERS)
        p.add_argument("--rates", action="store_true", help="also write reference rate curves")
        p.add_argument("--replicates", action="store_true", help="include one series per replicate")
        p.set_defaults(func=func)

    p = sub.add_parser("stats", help="summary of a directory of adjacency files")
    p.add_argument("directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("presets", help="list built-in presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=settings.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, AdjacencyFormatError) as e:
        print(f"[ERROR] {e}")
        return EXIT_VALIDATION
    except ValueError as e:  # overrides de --n-runs / --horizon fuera de rango
        print(f"[ERROR] {e}")
        return EXIT_VALIDATION
    except InterferenceError as e:
        print(f"[ERROR] {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
