# estimators.py
"""Primitivas de estimación: one-hot por lotes, sumas de columna, OLS restringido y Lasso por filas."""
import logging
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from errors import SingularDesignError

logger = logging.getLogger(__name__)

LASSO_TOL = 1e-8
LASSO_MAX_SWEEPS = 10_000
KKT_TOL = 1e-6
RIDGE_FACTOR = 1e-10


# --- Modelos ---
class BatchData(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    actions: np.ndarray
    rewards: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if self.actions.ndim != 2 or self.rewards.ndim != 2:
            raise ValueError("actions and rewards must be 2-D")
        if self.actions.shape[0] != self.rewards.shape[0]:
            raise ValueError("actions and rewards need the same number of rows")
        if not np.all(np.abs(self.actions) == 1.0):
            raise ValueError("action entries must be exactly -1 or +1")
        return self

    @property
    def n(self) -> int:
        return int(self.actions.shape[0])

    @property
    def d(self) -> int:
        return int(self.actions.shape[1])


class LassoFit(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: List[int]
    coef: np.ndarray          # (len(rows), d)
    converged: bool
    sweeps: int

    def row(self, i: int) -> np.ndarray:
        return self.coef[self.rows.index(i)]


class DesignMoments(BaseModel):
    """Momentos acumulados de un diseño ±1 y sus respuestas; bastan para one-hot y OLS centrado."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int = 0
    action_sum: np.ndarray     # Σ a_t
    reward_sum: np.ndarray     # Σ Y_t
    cross: np.ndarray          # Σ Y_t a_tᵀ, [i, j]
    gram: Optional[np.ndarray] = None   # Σ a_t a_tᵀ

    @property
    def d(self) -> int:
        return int(self.action_sum.shape[0])

    def add(self, batch: BatchData) -> "DesignMoments":
        self.n += batch.n
        self.action_sum += batch.actions.sum(axis=0)
        self.reward_sum += batch.rewards.sum(axis=0)
        self.cross += batch.rewards.T @ batch.actions
        if self.gram is not None:
            self.gram += batch.actions.T @ batch.actions
        return self


def empty_moments(d: int, with_gram: bool = True) -> DesignMoments:
    return DesignMoments(action_sum=np.zeros(d), reward_sum=np.zeros(d), cross=np.zeros((d, d)),
                         gram=np.zeros((d, d)) if with_gram else None)


def design_moments(batch: BatchData, with_gram: bool = True) -> DesignMoments:
    return empty_moments(batch.d, with_gram).add(batch)


def make_batch(actions, rewards) -> BatchData:
    return BatchData(actions=np.asarray(actions, dtype=float), rewards=np.asarray(rewards, dtype=float))


# ----------------- one-hot -----------------
def _keep_columns(est: np.ndarray, columns: Optional[Sequence[int]]) -> np.ndarray:
    if columns is not None:
        mask = np.zeros(est.shape[1], dtype=bool)
        mask[np.asarray(list(columns), dtype=int)] = True
        est[:, ~mask] = 0.0
    return est


def one_hot_estimate(batch: BatchData, j: int) -> np.ndarray:
    return batch.rewards.T @ batch.actions[:, j] / batch.n


def one_hot_matrix(batch: BatchData, columns: Optional[Sequence[int]] = None) -> np.ndarray:
    """X̂[i, j] para todas las filas; columnas fuera de `columns` quedan en cero."""
    return _keep_columns(batch.rewards.T @ batch.actions / batch.n, columns)


def one_hot_from_moments(mom: DesignMoments, columns: Optional[Sequence[int]] = None) -> np.ndarray:
    """Igual que one_hot_matrix, sobre todas las rondas resumidas en `mom`."""
    if mom.n < 1:
        raise ValueError("moments hold no rounds")
    return _keep_columns(mom.cross / mom.n, columns)


def theta_full_support(xhat_col: np.ndarray, support_col: np.ndarray) -> float:
    return float(np.asarray(xhat_col)[np.asarray(support_col, dtype=bool)].sum())


def theta_hard_threshold(xhat_col: np.ndarray, tau: float) -> float:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    xhat_col = np.asarray(xhat_col)
    return float(xhat_col[np.abs(xhat_col) > tau / 8.0].sum())


# ----------------- OLS restringido -----------------
def _allowed_index(allowed: Iterable[int]) -> np.ndarray:
    return np.array(sorted(set(int(j) for j in allowed)), dtype=int)


def _solve_centered(gram: np.ndarray, rhs: np.ndarray, i: int) -> np.ndarray:
    k = gram.shape[0]
    trace = float(np.trace(gram))
    if trace <= 0.0:
        raise SingularDesignError(i, k)
    gram_reg = gram + (RIDGE_FACTOR * trace / k) * np.eye(k)
    if np.linalg.matrix_rank(gram_reg) < k:
        raise SingularDesignError(i, k)
    return np.linalg.solve(gram_reg, rhs)


def restricted_ols(batch: BatchData, i: int, allowed: Iterable[int]) -> np.ndarray:
    coef = np.zeros(batch.d)
    idx = _allowed_index(allowed)
    if idx.size == 0:
        return coef
    design = batch.actions[:, idx]
    centered = design - design.mean(axis=0)
    y = batch.rewards[:, i]
    coef[idx] = _solve_centered(centered.T @ centered, centered.T @ (y - y.mean()), i)
    return coef


def restricted_ols_moments(mom: DesignMoments, i: int, allowed: Iterable[int]) -> np.ndarray:
    """restricted_ols sobre momentos acumulados: mismo intercepto libre y misma cresta."""
    if mom.gram is None:
        raise ValueError("moments were collected without the Gram matrix")
    coef = np.zeros(mom.d)
    idx = _allowed_index(allowed)
    if idx.size == 0:
        return coef
    if mom.n < 1:
        raise SingularDesignError(i, idx.size)
    s = mom.action_sum[idx]
    gram = mom.gram[np.ix_(idx, idx)] - np.outer(s, s) / mom.n
    rhs = mom.cross[i, idx] - mom.reward_sum[i] * s / mom.n
    coef[idx] = _solve_centered(gram, rhs, i)
    return coef


# ----------------- Lasso -----------------
def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(batch: BatchData, i: int, coef: np.ndarray, lam: float) -> float:
    r = batch.rewards[:, i] - batch.actions @ coef
    return float(r @ r / (2.0 * batch.n) + lam * np.abs(coef).sum())


def kkt_residual(batch: BatchData, i: int, coef: np.ndarray, lam: float) -> float:
    """Máxima violación de las condiciones de subgradiente del objetivo Lasso."""
    grad = batch.actions.T @ (batch.rewards[:, i] - batch.actions @ coef) / batch.n
    active = coef != 0
    viol = np.where(active, np.abs(grad - lam * np.sign(coef)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


def lasso_rows(batch: BatchData, lam: float, rows: Optional[Sequence[int]] = None,
               max_sweeps: int = LASSO_MAX_SWEEPS, tol: float = LASSO_TOL) -> LassoFit:
    """Descenso por coordenadas cíclico, compartiendo la Gram entre todas las filas.

    Minimiza (1/2n)‖Y_i − Aγ‖² + λ‖γ‖₁ para cada fila i; sin warm starts.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    rows = list(range(batch.rewards.shape[1])) if rows is None else list(rows)
    A = batch.actions
    n, d = A.shape
    gram = A.T @ A / n
    diag = np.diag(gram).copy()
    coef = np.zeros((d, len(rows)))
    grad = A.T @ batch.rewards[:, rows] / n  # C − G·coef

    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for j in range(d):
            if diag[j] == 0.0:
                continue
            old = coef[j]
            new = soft_threshold(grad[j] + diag[j] * old, lam) / diag[j]
            delta = new - old
            change = float(np.abs(delta).max()) if delta.size else 0.0
            if change > 0.0:
                grad -= np.outer(gram[:, j], delta)
                coef[j] = new
                max_change = max(max_change, change)
        if max_change < tol:
            converged = True
            break

    if not converged:
        logger.warning("lasso did not converge after %d sweeps (lambda=%g)", sweeps, lam)
    return LassoFit(rows=rows, coef=coef.T.copy(), converged=converged, sweeps=sweeps)


def lasso_row(batch: BatchData, i: int, lam: float,
              max_sweeps: int = LASSO_MAX_SWEEPS, tol: float = LASSO_TOL) -> LassoFit:
    return lasso_rows(batch, lam, rows=[i], max_sweeps=max_sweeps, tol=tol)


# ----------------- diagnóstico -----------------
def restricted_eigenvalue_diagnostic(actions: np.ndarray, s: int, n_probes: int = 2000,
                                     seed: int = 0, cone: float = 3.0) -> float:
    """Cota empírica (por sondeo) de min uᵀ(AᵀA/n)u / ‖u_S‖² sobre direcciones s-dispersas y del cono."""
    A = np.asarray(actions, dtype=float)
    n, d = A.shape
    if n < 1 or d < 1:
        raise ValueError("design must be non-empty")
    s = int(min(max(s, 1), d))
    sigma = A.T @ A / n
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    supports = np.argsort(rng.random((n_probes, d)), axis=1)[:, :s]
    in_support = np.zeros((n_probes, d), dtype=bool)
    np.put_along_axis(in_support, supports, True, axis=1)

    # direcciones s-dispersas de norma uno
    sparse = np.where(in_support, rng.standard_normal((n_probes, d)), 0.0)
    sparse /= np.linalg.norm(sparse, axis=1, keepdims=True)
    ratios = [np.einsum("pi,ij,pj->p", sparse, sigma, sparse)]

    # direcciones del cono ‖u_Sᶜ‖₁ ≤ cone·‖u_S‖₁
    if s < d:
        head = np.where(in_support, rng.standard_normal((n_probes, d)), 0.0)
        tail = np.where(in_support, 0.0, rng.standard_normal((n_probes, d)))
        budget = cone * np.abs(head).sum(axis=1) * rng.uniform(0.0, 1.0, n_probes)
        tail *= (budget / np.abs(tail).sum(axis=1))[:, None]
        u = head + tail
        ratios.append(np.einsum("pi,ij,pj->p", u, sigma, u) / (head ** 2).sum(axis=1))

    return float(np.min(np.concatenate(ratios)))
