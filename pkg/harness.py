# harness.py
"""Ejecuta (entorno × política) durante T rondas, agrega réplicas y barre celdas."""
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from functools import lru_cache
from pathlib import Path
from typing import Annotated, Any, Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator
from tqdm import tqdm

from environment import Environment, view
from errors import InterferenceError, InvariantViolation, RoundError
from instances import (
    AdjacencyMatrix,
    SignalModelParams,
    generate_circulant,
    generate_mixed_signal,
    load_adjacency,
    load_adjacency_dir,
    overlay_signal,
)
from model import (
    InterferenceInstance,
    RegretTrace,
    check_action,
    column_profile,
    oracle_action,
    regret_against,
    row_sparsity,
    theta_of,
)
from policies import Policy, PolicySpec, build_policy

logger = logging.getLogger(__name__)

SEED_ROLES = ("instance", "noise", "policy")


# --- Especificación de instancias ---
class _InstanceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MixedInstanceSpec(_InstanceSpec):
    kind: Literal["mixed"] = "mixed"
    d: int = Field(ge=1)
    beta: float = Field(0.1, ge=0)
    s0: float = Field(20.0, gt=0)
    weak_factor: float = Field(0.001, gt=0, le=1)
    fixed: bool = False

    @field_validator("s0")
    @classmethod
    def _s0_within_d(cls, v: float, info: ValidationInfo) -> float:
        d = info.data.get("d")
        if d is not None and v > d:
            raise ValueError(f"s0={v} exceeds d={d}")
        return v


class CirculantInstanceSpec(_InstanceSpec):
    kind: Literal["circulant"] = "circulant"
    d: int = Field(ge=1)
    s: int = Field(ge=1)
    delta: float

    @field_validator("s")
    @classmethod
    def _s_within_d(cls, v: int, info: ValidationInfo) -> int:
        d = info.data.get("d")
        if d is not None and v > d:
            raise ValueError(f"s={v} exceeds d={d}")
        return v


class AdjacencyInstanceSpec(_InstanceSpec):
    kind: Literal["adjacency"] = "adjacency"
    path: str
    beta: float = Field(0.1, ge=0)
    weak_factor: float = Field(0.001, gt=0, le=1)


InstanceSpec = Annotated[
    Union[MixedInstanceSpec, CirculantInstanceSpec, AdjacencyInstanceSpec],
    Field(discriminator="kind"),
]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str
    instance: InstanceSpec
    policies: List[PolicySpec] = Field(min_length=1)
    T: int = Field(ge=1)
    n_runs: int = Field(ge=1)
    base_seed: int = Field(0, ge=0)
    noise_std: float = Field(1.0, ge=0)
    output: Optional[str] = None
    stride: int = Field(1, ge=1)


# --- Resultados ---
class RoundRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: int
    action: np.ndarray
    rewards: Optional[np.ndarray] = None
    regret: float
    cumulative: float


class RunResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    trace: RegretTrace
    actions: np.ndarray
    rewards: Optional[np.ndarray] = None
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    def records(self) -> Iterator[RoundRecord]:
        for k in range(self.trace.T):
            yield RoundRecord(
                t=k + 1,
                action=self.actions[k].astype(float),
                rewards=None if self.rewards is None else self.rewards[k],
                regret=float(self.trace.per_round[k]),
                cumulative=float(self.trace.cumulative[k]),
            )


class AggregateResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    experiment: str
    policy: str
    curves: np.ndarray                 # (réplicas, T) regret acumulado
    dims: np.ndarray                   # d de cada réplica
    mean: np.ndarray
    std: np.ndarray
    per_individual_mean: np.ndarray
    per_individual_std: np.ndarray

    @property
    def T(self) -> int:
        return int(self.mean.shape[0])

    @property
    def n_runs(self) -> int:
        return int(self.curves.shape[0])

    @property
    def finals(self) -> np.ndarray:
        return self.curves[:, -1] if self.T else np.zeros(self.n_runs)

    @property
    def per_individual_curves(self) -> np.ndarray:
        return self.curves / self.dims[:, None]


class CellResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: str
    results: List[AggregateResult] = Field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None


# ----------------- semillas -----------------
def derive_seed(base_seed: int, replicate: int, role: str) -> int:
    """blake2b de "base/réplica/rol" → entero de 64 bits; no depende del orden de ejecución."""
    if role not in SEED_ROLES:
        raise ValueError(f"unknown seed role {role!r}")
    digest = hashlib.blake2b(f"{base_seed}/{replicate}/{role}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# ----------------- instancias -----------------
@lru_cache(maxsize=8)
def _networks(path: str) -> Tuple[AdjacencyMatrix, ...]:
    p = Path(path)
    return tuple(load_adjacency_dir(p)) if p.is_dir() else (load_adjacency(p),)


def replicate_count(config: ExperimentConfig) -> int:
    if isinstance(config.instance, AdjacencyInstanceSpec):
        return len(_networks(config.instance.path)) * config.n_runs
    return config.n_runs


def instance_for(config: ExperimentConfig, replicate: int) -> InterferenceInstance:
    spec = config.instance
    if isinstance(spec, MixedInstanceSpec):
        key = 0 if spec.fixed else replicate
        params = SignalModelParams(d=spec.d, beta=spec.beta, s0=spec.s0, weak_factor=spec.weak_factor,
                                   seed=derive_seed(config.base_seed, key, "instance"))
        return generate_mixed_signal(params)
    if isinstance(spec, CirculantInstanceSpec):
        return generate_circulant(spec.d, spec.s, spec.delta)
    # una superposición fija por red; n_runs réplicas por cada una
    network = replicate // config.n_runs
    params = SignalModelParams(beta=spec.beta, weak_factor=spec.weak_factor,
                               seed=derive_seed(config.base_seed, network, "instance"))
    return overlay_signal(_networks(spec.path)[network], params)


# ----------------- una réplica -----------------
def run_one(env: Environment, policy: Policy, T: int, keep_rewards: bool = False) -> RunResult:
    instance = env.instance
    d = instance.d
    if policy.d != d:
        raise ValueError(f"policy dimension {policy.d} does not match environment dimension {d}")
    theta = theta_of(instance)
    a_star = oracle_action(theta)

    regrets = np.zeros(T)
    actions = np.zeros((T, d), dtype=np.int8)
    rewards = np.zeros((T, d)) if keep_rewards else None
    committed = np.zeros(d, dtype=bool)
    locked = np.zeros(d)

    for t in range(1, T + 1):
        try:
            a = check_action(policy.choose_action(t), d)
            y = env.step(a)
            policy.observe(t, view(y, policy.observes))
        except Exception as e:
            raise RoundError(t, e) from e

        # estabilidad del compromiso: una coordenada comprometida no cambia de signo
        fresh = committed & (locked == 0)
        locked[fresh] = a[fresh]
        if np.any(committed & (a != locked)):
            raise InvariantViolation(f"{policy.name}: committed coordinate changed sign at round {t}")

        mask = policy.committed_mask()
        if np.any(committed & ~mask):
            raise InvariantViolation(f"{policy.name}: undetermined set grew at round {t}")
        committed = mask.copy()

        regrets[t - 1] = regret_against(theta, a_star, a)
        if regrets[t - 1] < 0:
            raise InvariantViolation(f"negative regret at round {t}")
        actions[t - 1] = a.astype(np.int8)
        if keep_rewards:
            rewards[t - 1] = y

    return RunResult(trace=RegretTrace(per_round=regrets), actions=actions, rewards=rewards,
                     diagnostics=policy.diagnostics())


def run_replicate(config: ExperimentConfig, spec, replicate: int) -> Tuple[np.ndarray, int]:
    instance = instance_for(config, replicate)
    env = Environment(instance, noise_std=config.noise_std, seed=derive_seed(config.base_seed, replicate, "noise"))
    policy = build_policy(spec, instance, config.T, derive_seed(config.base_seed, replicate, "policy"))
    result = run_one(env, policy, config.T)
    return np.array(result.trace.cumulative), instance.d


# ----------------- agregación -----------------
def aggregate_curves(experiment: str, policy: str, curves: np.ndarray, dims: np.ndarray) -> AggregateResult:
    curves = np.asarray(curves, dtype=float)
    dims = np.asarray(dims, dtype=float)
    mean = curves.mean(axis=0)
    std = curves.std(axis=0)
    if np.all(dims == dims[0]):
        pi_mean, pi_std = mean / dims[0], std / dims[0]
    else:
        per_individual = curves / dims[:, None]
        pi_mean, pi_std = per_individual.mean(axis=0), per_individual.std(axis=0)
    return AggregateResult(experiment=experiment, policy=policy, curves=curves, dims=dims, mean=mean, std=std,
                           per_individual_mean=pi_mean, per_individual_std=pi_std)


def run_many(config: ExperimentConfig, spec, workers: int = 1, order: Optional[Sequence[int]] = None,
             progress: bool = False) -> AggregateResult:
    n = replicate_count(config)
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the replicate indices")
    curves: List[Optional[np.ndarray]] = [None] * n
    dims = np.zeros(n)
    label = f"{config.id}/{spec.display_name}"

    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_replicate, config, spec, r): r for r in order}
            for fut in tqdm(as_completed(futures), total=n, desc=label, disable=not progress):
                r = futures[fut]
                curves[r], dims[r] = fut.result()
    else:
        for r in tqdm(order, desc=label, disable=not progress):
            curves[r], dims[r] = run_replicate(config, spec, r)

    # la reducción va en orden de réplica, no de finalización
    result = aggregate_curves(config.id, spec.display_name, np.vstack(curves), dims)
    logger.info("%s: %d replicates, final mean regret %.4f", label, n, result.mean[-1])
    return result


def run_cell(config: ExperimentConfig, workers: int = 1, progress: bool = False) -> CellResult:
    logger.info("cell %s: T=%d, %d policies, n_runs=%d", config.id, config.T, len(config.policies), config.n_runs)
    results = [run_many(config, spec, workers=workers, progress=progress) for spec in config.policies]
    return CellResult(id=config.id, results=results)


def _isolated_cell(config: ExperimentConfig) -> CellResult:
    try:
        return run_cell(config)
    except (InterferenceError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        logger.error("cell %s failed: %s", config.id, e)
        return CellResult(id=config.id, failed=True, error=str(e))


def sweep(configs: Sequence[ExperimentConfig], workers: int = 1) -> List[CellResult]:
    """Cada celda es independiente; un fallo marca su celda y el barrido continúa."""
    configs = list(configs)
    if workers <= 1 or len(configs) <= 1:
        return [_isolated_cell(c) for c in configs]
    out: List[Optional[CellResult]] = [None] * len(configs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_isolated_cell, c): k for k, c in enumerate(configs)}
        for fut in as_completed(futures):
            k = futures[fut]
            try:
                out[k] = fut.result()
            except Exception as e:  # el proceso hijo murió
                out[k] = CellResult(id=configs[k].id, failed=True, error=str(e))
    return out


# ----------------- curvas de referencia -----------------
def reference_rates(instance: InterferenceInstance, T: int) -> pd.DataFrame:
    """Formas de las tasas de regret por política (constantes unitarias)."""
    t = np.arange(1, T + 1, dtype=float)
    rho = column_profile(instance).astype(float)
    s = max(row_sparsity(instance), 1)
    d = instance.d
    return pd.DataFrame({
        "t": t.astype(int),
        "full_support": np.sqrt(t) * np.sqrt(rho).sum(),
        "column_sizes": np.sqrt(t) * rho.sum(),
        "row_sparsity_only": d * (s * t) ** (2.0 / 3.0),
        "aggregated": d * np.sqrt(d * t),
    })
