# config.py
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Union

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from errors import ConfigParseError, ConfigValidationError
from harness import ExperimentConfig

# --- Carga .env ---
load_dotenv()

WORKERS = int(os.getenv("INTERFERENCE_WORKERS", "1"))
LOG_LEVEL = os.getenv("INTERFERENCE_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.getenv("INTERFERENCE_OUTPUT_DIR", "results")
VILLAGE_DIR = os.getenv("INTERFERENCE_VILLAGE_DIR", "data/villages")

TOP_LEVEL_KEYS = {"defaults", "experiments"}

# constantes prácticas de los experimentos publicados; c_tau calibrado para estimaciones acumuladas
PRACTICAL_LAMBDA = 0.035
PRACTICAL_C_TAU = 0.3
PRACTICAL_DELTA = 0.05
PRACTICAL_THRESHOLD_CONSTANT = 8.0


# ----------------- presets -----------------
def _policies(T1: int, baseline: bool = True) -> List[Dict[str, Any]]:
    out = [{"name": "baseline"}] if baseline else []
    out += [
        {"name": "netc", "lambda": PRACTICAL_LAMBDA, "T1": T1},
        {"name": "nse", "threshold": "practical", "c_tau": PRACTICAL_C_TAU},
        {"name": "nse_fs", "threshold": "practical", "delta": PRACTICAL_DELTA,
         "threshold_constant": PRACTICAL_THRESHOLD_CONSTANT},
    ]
    return out


def _mixed(d: int, beta: float = 0.1, s0: float = 20) -> Dict[str, Any]:
    return {"kind": "mixed", "d": d, "beta": beta, "s0": s0}


def _fig1() -> Dict[str, Any]:
    return {"experiments": [
        {"id": "fig1", "T": 20000, "n_runs": 200, "instance": _mixed(100), "policies": _policies(200)},
    ]}


def _fig2() -> Dict[str, Any]:
    return {
        "defaults": {"T": 20000, "n_runs": 100},
        "experiments": [
            {"id": f"fig2-d{d}", "instance": _mixed(d), "policies": _policies(200, baseline=False)}
            for d in (100, 300, 500, 700, 900)
        ],
    }


def _fig3() -> Dict[str, Any]:
    return {
        "defaults": {"T": 20000, "n_runs": 100},
        "experiments": [
            {"id": f"fig3-beta{beta}", "instance": _mixed(100, beta=beta), "policies": _policies(200)}
            for beta in (0.01, 0.05, 0.1, 0.15, 0.2, 0.5)
        ],
    }


def _fig4() -> Dict[str, Any]:
    return {
        "defaults": {"T": 20000, "n_runs": 100},
        "experiments": [
            {"id": f"fig4-s{s0}", "instance": _mixed(100, s0=s0), "policies": _policies(200)}
            for s0 in (5, 10, 15, 20, 25, 50)
        ],
    }


def _village() -> Dict[str, Any]:
    return {"experiments": [
        {"id": "village", "T": 20000, "n_runs": 5,
         "instance": {"kind": "adjacency", "path": VILLAGE_DIR, "beta": 0.1},
         "policies": _policies(300)},
    ]}


PRESETS: Dict[str, Callable[[], Dict[str, Any]]] = {
    "fig1": _fig1,
    "fig2": _fig2,
    "fig3": _fig3,
    "fig4": _fig4,
    "village": _village,
}


def list_presets() -> List[str]:
    return list(PRESETS)


# ----------------- parsing -----------------
def _key_path(prefix: str, loc) -> str:
    path = prefix
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def load_raw(source: Union[str, Path]) -> Any:
    name = str(source)
    if name in PRESETS and not Path(name).exists():
        return PRESETS[name]()
    try:
        with open(source, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    except OSError as e:
        raise ConfigParseError(f"cannot read config {name}: {e.strerror or e}") from e
    except yaml.YAMLError as e:
        raise ConfigParseError(f"invalid YAML in {name}: {e}") from e


def validate_raw(raw: Any) -> List[ExperimentConfig]:
    if raw is None:
        return []
    if not isinstance(raw, dict):
        raise ConfigValidationError("", "top level must be a mapping")
    unknown = sorted(set(raw) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigValidationError(str(unknown[0]), "unknown key")

    defaults = raw.get("defaults") or {}
    if not isinstance(defaults, dict):
        raise ConfigValidationError("defaults", "must be a mapping")
    cells = raw.get("experiments")
    if cells is None:
        raise ConfigValidationError("experiments", "field required")
    if not isinstance(cells, list):
        raise ConfigValidationError("experiments", "must be a list")

    configs: List[ExperimentConfig] = []
    seen = set()
    for k, cell in enumerate(cells):
        prefix = f"experiments[{k}]"
        if not isinstance(cell, dict):
            raise ConfigValidationError(prefix, "must be a mapping")
        try:
            config = ExperimentConfig.model_validate({**defaults, **cell})
        except ValidationError as e:
            err = e.errors()[0]
            raise ConfigValidationError(_key_path(prefix, err["loc"]), err["msg"]) from e
        if config.id in seen:
            raise ConfigValidationError(f"{prefix}.id", f"duplicate experiment id {config.id!r}")
        seen.add(config.id)
        configs.append(config)
    return configs


def parse_config(source: Union[str, Path]) -> List[ExperimentConfig]:
    """Archivo YAML o nombre de preset → celdas validadas."""
    return validate_raw(load_raw(source))
