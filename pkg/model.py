# model.py
"""Representación del problema: matriz de interferencia, θ, acción oráculo y regret."""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import InvalidActionError

# tolerancia para el chequeo de la Asunción 1 (filas con norma L1 <= 1)
L1_TOLERANCE = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


# --- Modelos de dominio ---
class InterferenceInstance(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    effects: np.ndarray
    support: np.ndarray
    assumption_compliant: bool
    label: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        e, s = self.effects, self.support
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"effects must be square, got shape {e.shape}")
        if s.shape != e.shape:
            raise ValueError("support and effects shapes differ")
        if not np.array_equal(s, e != 0):
            raise ValueError("support must be exactly the nonzero pattern of effects")
        return self

    @classmethod
    def from_effects(cls, effects: np.ndarray, label: Optional[str] = None) -> "InterferenceInstance":
        effects = _frozen(np.asarray(effects, dtype=float))
        support = _frozen(effects != 0)
        compliant = bool(np.all(np.abs(effects).sum(axis=1) <= 1.0 + L1_TOLERANCE))
        return cls(effects=effects, support=support, assumption_compliant=compliant, label=label)

    @property
    def d(self) -> int:
        return int(self.effects.shape[0])

    def row_sparsity(self) -> int:
        return row_sparsity(self)

    def column_profile(self) -> np.ndarray:
        return column_profile(self)


class RegretTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    per_round: np.ndarray
    cumulative: np.ndarray = Field(default=None)

    @model_validator(mode="after")
    def _fill(self):
        per_round = _frozen(np.asarray(self.per_round, dtype=float))
        object.__setattr__(self, "per_round", per_round)
        object.__setattr__(self, "cumulative", _frozen(np.cumsum(per_round)))
        return self

    @property
    def T(self) -> int:
        return int(self.per_round.shape[0])

    @property
    def final(self) -> float:
        return float(self.cumulative[-1]) if self.T else 0.0


# ----------------- operaciones -----------------
def sign_pm(x: np.ndarray) -> np.ndarray:
    """Signo con sign(0) = +1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def check_action(a: np.ndarray, d: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (d,):
        raise InvalidActionError(f"action must have shape ({d},), got {a.shape}")
    if not np.all(np.abs(a) == 1.0):
        raise InvalidActionError("action entries must be exactly -1 or +1")
    return a


def theta_of(instance: InterferenceInstance) -> np.ndarray:
    return instance.effects.sum(axis=0)


def oracle_action(theta: np.ndarray) -> np.ndarray:
    return sign_pm(theta)


def regret_against(theta: np.ndarray, a_star: np.ndarray, a: np.ndarray) -> float:
    # θᵀ(a* − a) = 2·Σ|θ_j| sobre los signos que no coinciden; así nunca es negativo
    return float(2.0 * np.abs(theta[a != a_star]).sum())


def instantaneous_regret(instance: InterferenceInstance, a: np.ndarray) -> float:
    a = check_action(a, instance.d)
    theta = theta_of(instance)
    return regret_against(theta, oracle_action(theta), a)


def expected_reward(instance: InterferenceInstance, a: np.ndarray) -> float:
    """1ᵀX*a, la recompensa agregada esperada."""
    return float(instance.effects.sum(axis=0) @ np.asarray(a, dtype=float))


def column_profile(instance: InterferenceInstance) -> np.ndarray:
    return instance.support.sum(axis=0).astype(int)


def row_sparsity(instance: InterferenceInstance) -> int:
    if instance.d == 0:
        return 0
    return int(instance.support.sum(axis=1).max())
