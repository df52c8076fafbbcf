# policies.py
"""Políticas online: NSE-FS, NSE, NETC, baseline UCB agregado y oráculo.

Todas comparten la interfaz choose_action(t) / observe(t, feedback) con t en 1..T.
Cada política se construye sólo con la información que su escenario permite
(ver build_policy); nunca recibe la instancia completa salvo el oráculo.
"""
import logging
import math
from abc import ABC, abstractmethod
from typing import Annotated, Any, ClassVar, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from environment import Feedback
from errors import SingularDesignError
from estimators import (
    design_moments,
    empty_moments,
    lasso_rows,
    make_batch,
    one_hot_from_moments,
    restricted_ols_moments,
)
from model import InterferenceInstance, column_profile, oracle_action, row_sparsity, sign_pm, theta_of

logger = logging.getLogger(__name__)


# --- Calendario de lotes ---
class BatchSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    T: int
    M: int
    boundaries: List[int]

    def size(self, m: int) -> int:
        start = self.boundaries[m - 2] if m > 1 else 0
        return self.boundaries[m - 1] - start


def schedule(T: int) -> BatchSchedule:
    if T < 1:
        raise ValueError("horizon must be at least 1")
    # M = ⌈log₂(T/2 + 1)⌉ en aritmética entera: menor M con 2^(M+1) >= T + 2
    M = 0
    while 2 ** (M + 1) < T + 2:
        M += 1
    boundaries = [min(2 * (2 ** m - 1), T) for m in range(1, M)] + [T]
    return BatchSchedule(T=T, M=M, boundaries=boundaries)


def _log2_horizon(T: int) -> float:
    return max(math.log2(T), 1.0)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


# --- Interfaz común ---
class Policy(ABC):
    name: ClassVar[str] = "policy"
    observes: ClassVar[str] = "vector"

    def __init__(self, d: int, T: int, seed: int = 0):
        self.d = int(d)
        self.T = int(T)
        self.seed = seed
        self.rng = _rng(seed)
        self._last_action: Optional[np.ndarray] = None

    def _rademacher(self) -> np.ndarray:
        return self.rng.integers(0, 2, size=self.d) * 2.0 - 1.0

    @abstractmethod
    def choose_action(self, t: int) -> np.ndarray:
        ...

    @abstractmethod
    def observe(self, t: int, feedback: Feedback) -> None:
        ...

    def committed_mask(self) -> np.ndarray:
        """Coordenadas cuyo signo ya no puede cambiar."""
        return np.zeros(self.d, dtype=bool)

    def diagnostics(self) -> Dict[str, Any]:
        return {}


# ----------------- eliminación sucesiva -----------------
THRESHOLD_MODES = ("theory", "practical")


class _EliminationPolicy(Policy):
    """Esqueleto por lotes compartido por NSE y NSE-FS.

    Modo "theory": cada lote se estima sólo con sus rondas. Modo "practical": los
    momentos se acumulan y el lote m usa las T_m rondas jugadas hasta su cierre.
    """
    needs_gram: ClassVar[bool] = False

    def __init__(self, d: int, T: int, rho: np.ndarray, seed: int = 0, threshold: str = "theory"):
        super().__init__(d, T, seed)
        if threshold not in THRESHOLD_MODES:
            raise ValueError(f"unknown threshold mode {threshold!r}")
        self.threshold = threshold
        self.sched = schedule(T)
        self.rho = np.asarray(rho, dtype=float)
        self.undetermined = np.ones(d, dtype=bool)
        self.theta_hat = np.zeros(d)
        self.committed_sign = np.zeros(d)
        self.commit_round = np.full(d, -1, dtype=int)
        self.undetermined_history: List[int] = []
        self.m = 1
        self.moments = empty_moments(d, self.needs_gram)
        self._actions: List[np.ndarray] = []
        self._rewards: List[np.ndarray] = []

    @property
    def pooled(self) -> bool:
        return self.threshold == "practical"

    def choose_action(self, t: int) -> np.ndarray:
        a = np.where(self.undetermined, self._rademacher(), self.committed_sign)
        self._last_action = a
        return a

    def observe(self, t: int, feedback: Feedback) -> None:
        self._actions.append(self._last_action)
        self._rewards.append(feedback.rewards)
        if self.m <= self.sched.M and t == self.sched.boundaries[self.m - 1]:
            batch = make_batch(np.vstack(self._actions), np.vstack(self._rewards))
            if self.pooled:
                self.moments.add(batch)
            else:
                self.moments = design_moments(batch, self.needs_gram)
            self._actions, self._rewards = [], []
            self._end_batch()

    @abstractmethod
    def _estimate(self, m: int, undetermined: np.ndarray):
        """Devuelve (θ̂ para las columnas indeterminadas, umbral de eliminación por columna)."""

    def _end_batch(self) -> None:
        m = self.m
        U = self.undetermined.copy()
        theta_new, thresholds = self._estimate(m, U)
        self.theta_hat[U] = theta_new[U]
        eliminate = U & ((self.rho == 0) | (np.abs(theta_new) > thresholds))
        self.committed_sign[eliminate] = sign_pm(self.theta_hat[eliminate])
        self.commit_round[eliminate] = self.sched.boundaries[m - 1]
        self.undetermined &= ~eliminate
        self.undetermined_history.append(int(self.undetermined.sum()))
        logger.debug("%s batch %d/%d (n=%d): eliminated %d, |U|=%d",
                     self.name, m, self.sched.M, self.moments.n, int(eliminate.sum()),
                     self.undetermined_history[-1])
        self.m += 1

    def committed_mask(self) -> np.ndarray:
        return ~self.undetermined

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "undetermined_history": list(self.undetermined_history),
            "commit_round": self.commit_round.tolist(),
        }


class NsePolicy(_EliminationPolicy):
    name = "nse"

    def __init__(self, T: int, rho: np.ndarray, delta: Optional[float] = 0.05, seed: int = 0,
                 threshold: str = "theory", c_tau: float = 0.2):
        rho = np.asarray(rho)
        super().__init__(len(rho), T, rho, seed, threshold)
        self.delta = delta if delta is not None else 1.0 / (self.d * T)
        self.c_tau = c_tau

    def tau(self, m: int) -> float:
        if self.threshold == "practical":
            return self.c_tau * math.sqrt(2.0 * math.log(2.0 * self.T) / self.sched.boundaries[m - 1])
        L = _log2_horizon(self.T)
        return 16.0 * math.sqrt(math.log(4.0 * self.d ** 2 * L / self.delta) / 2 ** (m - 1))

    def _estimate(self, m, undetermined):
        tau = self.tau(m)
        xhat = one_hot_from_moments(self.moments, np.flatnonzero(undetermined))
        theta = np.where(np.abs(xhat) > tau / 8.0, xhat, 0.0).sum(axis=0)
        return theta, self.rho * tau


def warmup_batches(T: int, d: int, s: int, delta: float, M: int) -> int:
    """m_0 = ⌈log₂(128·s·log(8·log₂T·d·s/δ))⌉ ∧ M, al menos 1."""
    s = max(s, 1)
    inner = 128.0 * s * math.log(8.0 * _log2_horizon(T) * d * s / delta)
    if inner <= 1.0:
        return 1
    return max(1, min(math.ceil(math.log2(inner)), M))


class NseFsPolicy(_EliminationPolicy):
    """Eliminación con soporte completo: one-hot en calentamiento, OLS por fila después.

    En modo práctico la regresión empieza en el lote 1 sobre todas las rondas acumuladas,
    τ_m = √(2·log(1/δ)/T_m) y las entradas con |X̂_ij| ≤ τ_m/threshold_constant se anulan
    antes de sumar la columna.
    """
    name = "nse_fs"
    needs_gram = True

    def __init__(self, T: int, support: np.ndarray, delta: Optional[float] = 0.05, seed: int = 0,
                 threshold_constant: float = 8.0, m0: Optional[int] = None, threshold: str = "theory"):
        support = np.array(support, dtype=bool)
        support.setflags(write=False)
        super().__init__(support.shape[0], T, support.sum(axis=0), seed, threshold)
        self.support = support
        self.delta = delta if delta is not None else 1.0 / (self.d * T)
        self.threshold_constant = threshold_constant
        if m0 is not None:
            self.m0 = m0
        elif self.pooled:
            self.m0 = 1
        else:
            s = int(support.sum(axis=1).max()) if self.d else 0
            self.m0 = warmup_batches(T, self.d, s, self.delta, self.sched.M)
        self.one_hot_rows = 0

    def tau(self, m: int) -> float:
        if self.threshold == "practical":
            return math.sqrt(2.0 * math.log(1.0 / self.delta) / self.sched.boundaries[m - 1])
        L = _log2_horizon(self.T)
        return self.threshold_constant * math.sqrt(math.log(16.0 * self.d ** 2 * L / self.delta) / 2 ** m)

    def _estimate(self, m, undetermined):
        tau = self.tau(m)
        onehot = one_hot_from_moments(self.moments, np.flatnonzero(undetermined))
        if m < self.m0:
            # fase de calentamiento: one-hot y suma sobre el soporte
            return (onehot * self.support).sum(axis=0), self.rho * tau

        # fase OLS: regresión centrada sobre E_i = S_i ∩ U_{m-1}
        xhat = np.zeros((self.d, self.d))
        for i in range(self.d):
            allowed = np.flatnonzero(self.support[i] & undetermined)
            if allowed.size == 0:
                continue
            if self.moments.n <= 2 * allowed.size:
                # muy pocas rondas para esta fila
                self.one_hot_rows += 1
                xhat[i, allowed] = onehot[i, allowed]
                continue
            try:
                xhat[i] = restricted_ols_moments(self.moments, i, allowed)
            except SingularDesignError as e:
                self.one_hot_rows += 1
                logger.warning("nse_fs batch %d: %s; falling back to one-hot for row %d", m, e, i)
                xhat[i, allowed] = onehot[i, allowed]
        if self.pooled:
            xhat = np.where(np.abs(xhat) > tau / self.threshold_constant, xhat, 0.0)
        return (xhat * self.support).sum(axis=0), np.sqrt(self.rho) * tau

    def diagnostics(self) -> Dict[str, Any]:
        out = super().diagnostics()
        out.update(m0=self.m0, one_hot_rows=self.one_hot_rows)
        return out


# ----------------- explorar y comprometerse -----------------
def exploration_length(T: int, s: int) -> int:
    # el margen evita que un cubo exacto redondee hacia arriba por error de coma flotante
    return math.ceil((max(s, 1) * T) ** (2.0 / 3.0) - 1e-9)


def netc_lambda(d: int, T: int, s: int, delta: Optional[float] = None) -> float:
    delta = delta if delta is not None else 1.0 / (d * T)
    s = max(s, 1)
    return 4.0 * math.sqrt(2.0 * math.log(2.0 * d ** 2 / delta) / (T ** (2.0 / 3.0) * s ** (2.0 / 3.0)))


class NetcPolicy(Policy):
    name = "netc"

    def __init__(self, d: int, T: int, s: int, lam: Optional[float] = None, T1: Optional[int] = None,
                 seed: int = 0, delta: Optional[float] = None):
        super().__init__(d, T, seed)
        self.s = max(int(s), 1)
        self.T1 = int(T1) if T1 is not None else exploration_length(T, self.s)
        self.lam = lam if lam is not None else netc_lambda(d, T, self.s, delta)
        self.degenerate = self.T1 >= T
        if self.degenerate:
            logger.warning("netc: T1=%d >= T=%d, the whole run is exploration", self.T1, T)
        n_explore = min(self.T1, T)
        self._actions = np.zeros((n_explore, d))
        self._rewards = np.zeros((n_explore, d))
        self.phase = "explore"
        self.xhat: Optional[np.ndarray] = None
        self.theta_hat: Optional[np.ndarray] = None
        self.committed: Optional[np.ndarray] = None
        self.lasso_converged: Optional[bool] = None

    def choose_action(self, t: int) -> np.ndarray:
        a = self._rademacher() if self.phase == "explore" else self.committed
        self._last_action = a
        return a

    def observe(self, t: int, feedback: Feedback) -> None:
        if self.phase != "explore":
            return
        self._actions[t - 1] = self._last_action
        self._rewards[t - 1] = feedback.rewards
        if t == self.T1:
            self._commit()

    def _commit(self) -> None:
        fit = lasso_rows(make_batch(self._actions, self._rewards), self.lam)
        self.xhat = fit.coef
        self.lasso_converged = fit.converged
        self.theta_hat = self.xhat.sum(axis=0)
        self.committed = sign_pm(self.theta_hat)
        self.phase = "commit"
        logger.debug("netc committed after %d rounds (lambda=%g, sweeps=%d)", self.T1, self.lam, fit.sweeps)

    def committed_mask(self) -> np.ndarray:
        return np.full(self.d, self.phase == "commit")

    def diagnostics(self) -> Dict[str, Any]:
        return {"T1": self.T1, "lambda": self.lam, "degenerate": self.degenerate,
                "lasso_converged": self.lasso_converged}


# ----------------- baseline agregado -----------------
class BaselineUcbPolicy(Policy):
    """UCB lineal (estilo OFUL) sobre la recompensa agregada Z_t = 1ᵀY_t."""
    name = "baseline"
    observes = "aggregate"

    def __init__(self, d: int, T: int, seed: int = 0, maximizer_budget: int = 10_000, restarts: int = 8,
                 reg: float = 1.0, delta: Optional[float] = None, noise_scale: Optional[float] = None,
                 theta_bound: Optional[float] = None):
        super().__init__(d, T, seed)
        self.budget = int(maximizer_budget)
        self.restarts = int(restarts)
        self.reg = float(reg)
        self.delta = delta if delta is not None else 1.0 / T
        self.noise_scale = noise_scale if noise_scale is not None else math.sqrt(d)
        self.theta_bound = theta_bound if theta_bound is not None else float(d)
        self.V_inv = np.eye(d) / self.reg
        self.b = np.zeros(d)
        self.logdet_ratio = 0.0  # log det V − d·log λ
        self._played = np.zeros((T, d), dtype=np.int8)
        self._n_played = 0
        self.fallbacks = 0
        self.exhausted = 0
        self._cube = self._hypercube(d) if d <= 30 and 2 ** d <= self.budget else None

    @staticmethod
    def _hypercube(d: int) -> np.ndarray:
        codes = np.arange(2 ** d)[:, None] >> np.arange(d)[None, :]
        return np.where(codes & 1, 1.0, -1.0)

    def radius(self) -> float:
        return (self.noise_scale * math.sqrt(2.0 * (0.5 * self.logdet_ratio + math.log(1.0 / self.delta)))
                + math.sqrt(self.reg) * self.theta_bound)

    def ucb(self, actions: np.ndarray, theta_hat: np.ndarray, beta: float) -> np.ndarray:
        actions = np.atleast_2d(actions)
        width = np.einsum("ki,ij,kj->k", actions, self.V_inv, actions)
        return actions @ theta_hat + beta * np.sqrt(np.maximum(width, 0.0))

    def choose_action(self, t: int) -> np.ndarray:
        theta_hat = self.V_inv @ self.b
        a = self._maximize(theta_hat, self.radius())
        self._last_action = a
        return a

    def _maximize(self, theta: np.ndarray, beta: float) -> np.ndarray:
        if self._cube is not None:
            return self._cube[int(np.argmax(self.ucb(self._cube, theta, beta)))].copy()

        d = self.d
        if 1 + self.restarts > self.budget:
            # ni los arranques caben en el presupuesto: repetir una acción ya jugada
            if self._n_played:
                self.fallbacks += 1
                return self._played[int(self.rng.integers(self._n_played))].astype(float)
            return sign_pm(theta)

        A = np.vstack([sign_pm(theta)[None, :], self.rng.integers(0, 2, size=(self.restarts, d)) * 2.0 - 1.0])
        W = A @ self.V_inv
        q = np.einsum("ki,ki->k", A, W)
        mean = A @ theta
        f = mean + beta * np.sqrt(np.maximum(q, 0.0))
        diag = np.diag(self.V_inv)
        evals = A.shape[0]
        active = np.ones(A.shape[0], dtype=bool)

        # ascenso por la mejor inversión de una coordenada, todos los arranques a la vez
        while active.any():
            idx = np.flatnonzero(active)
            if evals + idx.size * d > self.budget:
                break
            evals += idx.size * d
            q_new = q[idx, None] - 4.0 * A[idx] * W[idx] + 4.0 * diag[None, :]
            m_new = mean[idx, None] - 2.0 * A[idx] * theta[None, :]
            f_new = m_new + beta * np.sqrt(np.maximum(q_new, 0.0))
            best = np.argmax(f_new, axis=1)
            rows = np.arange(idx.size)
            best_f = f_new[rows, best]
            improve = best_f > f[idx] + 1e-12

            active[idx[~improve]] = False

            sel = np.flatnonzero(improve)
            up, jj = idx[sel], best[sel]
            flipped = A[up, jj].copy()
            A[up, jj] = -flipped
            W[up] -= 2.0 * flipped[:, None] * self.V_inv[jj]
            q[up] = q_new[sel, jj]
            mean[up] = m_new[sel, jj]
            f[up] = best_f[sel]

        if active.any():
            # presupuesto agotado antes del óptimo local: se queda el mejor iterado
            self.exhausted += 1
        return A[int(np.argmax(f))].copy()

    def observe(self, t: int, feedback: Feedback) -> None:
        a = self._last_action
        w = self.V_inv @ a
        denom = 1.0 + float(a @ w)
        self.V_inv -= np.outer(w, w) / denom
        self.logdet_ratio += math.log(denom)
        self.b += a * feedback.total
        self._played[self._n_played] = a.astype(np.int8)
        self._n_played += 1

    def diagnostics(self) -> Dict[str, Any]:
        return {"fallbacks": self.fallbacks, "exhausted": self.exhausted, "radius": self.radius()}


# ----------------- oráculo -----------------
class OraclePolicy(Policy):
    name = "oracle"
    observes = "aggregate"

    def __init__(self, instance: InterferenceInstance):
        super().__init__(instance.d, 1, 0)
        self.action = oracle_action(theta_of(instance))

    def choose_action(self, t: int) -> np.ndarray:
        return self.action.copy()

    def observe(self, t: int, feedback: Feedback) -> None:
        pass

    def committed_mask(self) -> np.ndarray:
        return np.ones(self.d, dtype=bool)


# --- Fábricas ---
def nse_fs_policy(T: int, support: np.ndarray, delta: Optional[float] = 0.05, seed: int = 0,
                  threshold_constant: float = 8.0, m0: Optional[int] = None,
                  threshold: str = "theory") -> NseFsPolicy:
    return NseFsPolicy(T, support, delta=delta, seed=seed, threshold_constant=threshold_constant, m0=m0,
                       threshold=threshold)


def nse_policy(T: int, rho: np.ndarray, delta: Optional[float] = 0.05, seed: int = 0,
               threshold: str = "theory", c_tau: float = 0.2) -> NsePolicy:
    return NsePolicy(T, rho, delta=delta, seed=seed, threshold=threshold, c_tau=c_tau)


def netc_policy(T: int, s: int, lam: Optional[float] = None, T1_override: Optional[int] = None,
                seed: int = 0, d: int = 1, delta: Optional[float] = None) -> NetcPolicy:
    return NetcPolicy(d, T, s, lam=lam, T1=T1_override, seed=seed, delta=delta)


def baseline_ucb_policy(T: int, seed: int = 0, maximizer_budget: int = 10_000, d: int = 1,
                        **kwargs) -> BaselineUcbPolicy:
    return BaselineUcbPolicy(d, T, seed=seed, maximizer_budget=maximizer_budget, **kwargs)


def oracle_policy(instance: InterferenceInstance) -> OraclePolicy:
    return OraclePolicy(instance)


# --- Especificaciones de política (superficie de configuración) ---
class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    label: Optional[str] = None

    @property
    def display_name(self) -> str:
        return self.label or self.name


class BaselineSpec(_Spec):
    name: Literal["baseline"] = "baseline"
    reg: float = Field(1.0, gt=0)
    delta: Optional[float] = Field(None, gt=0, lt=1)
    restarts: int = Field(8, ge=0)
    maximizer_budget: int = Field(10_000, ge=1)
    noise_scale: Optional[float] = Field(None, gt=0)


class NseFsSpec(_Spec):
    name: Literal["nse_fs"] = "nse_fs"
    delta: Optional[float] = Field(0.05, gt=0, lt=1)
    threshold_constant: float = Field(8.0, gt=0)
    m0: Optional[int] = Field(None, ge=1)
    threshold: Literal["theory", "practical"] = "theory"


class NseSpec(_Spec):
    name: Literal["nse"] = "nse"
    delta: Optional[float] = Field(0.05, gt=0, lt=1)
    threshold: Literal["theory", "practical"] = "theory"
    c_tau: float = Field(0.2, gt=0)


class NetcSpec(_Spec):
    name: Literal["netc"] = "netc"
    lam: Optional[float] = Field(None, alias="lambda", ge=0)
    T1: Optional[int] = Field(None, ge=1)
    delta: Optional[float] = Field(None, gt=0, lt=1)


class OracleSpec(_Spec):
    name: Literal["oracle"] = "oracle"


PolicySpec = Annotated[
    Union[BaselineSpec, NseFsSpec, NseSpec, NetcSpec, OracleSpec],
    Field(discriminator="name"),
]


def build_policy(spec, instance: InterferenceInstance, T: int, seed: int) -> Policy:
    """Construye la política entregándole sólo su vista permitida de la instancia."""
    if isinstance(spec, NseFsSpec):
        return nse_fs_policy(T, instance.support.copy(), delta=spec.delta, seed=seed,
                             threshold_constant=spec.threshold_constant, m0=spec.m0, threshold=spec.threshold)
    if isinstance(spec, NseSpec):
        return nse_policy(T, column_profile(instance), delta=spec.delta, seed=seed,
                          threshold=spec.threshold, c_tau=spec.c_tau)
    if isinstance(spec, NetcSpec):
        return netc_policy(T, row_sparsity(instance), lam=spec.lam, T1_override=spec.T1, seed=seed,
                           d=instance.d, delta=spec.delta)
    if isinstance(spec, BaselineSpec):
        return baseline_ucb_policy(T, seed=seed, maximizer_budget=spec.maximizer_budget, d=instance.d,
                                   restarts=spec.restarts, reg=spec.reg, delta=spec.delta,
                                   noise_scale=spec.noise_scale)
    if isinstance(spec, OracleSpec):
        return oracle_policy(instance)
    raise TypeError(f"unknown policy spec {type(spec).__name__}")
