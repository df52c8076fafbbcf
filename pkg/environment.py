# environment.py
"""Bucle de muestreo: Y_t = X*·a_t + ε_t y su agregado Z_t = 1ᵀY_t."""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from model import InterferenceInstance, check_action


class Feedback(BaseModel):
    """Lo que ve una política tras jugar: el vector completo o sólo el agregado."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rewards: Optional[np.ndarray] = None
    total: Optional[float] = None


class Environment:
    def __init__(self, instance: InterferenceInstance, noise_std: float = 1.0, seed: int = 0):
        if noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        self.instance = instance
        self.noise_std = float(noise_std)
        self.seed = seed
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    @property
    def d(self) -> int:
        return self.instance.d

    def mean_reward(self, a: np.ndarray) -> np.ndarray:
        return self.instance.effects @ a

    def step(self, a: np.ndarray) -> np.ndarray:
        a = check_action(a, self.d)
        # el flujo de ruido avanza siempre, también con noise_std = 0
        eps = self.rng.standard_normal(self.d)
        return self.mean_reward(a) + self.noise_std * eps


def aggregate(y: np.ndarray) -> float:
    return float(np.sum(y))


def view(y: np.ndarray, observes: str) -> Feedback:
    """Recorta la observación al nivel de información de la política."""
    if observes == "aggregate":
        return Feedback(total=aggregate(y))
    if observes == "vector":
        return Feedback(rewards=np.array(y, copy=True))
    raise ValueError(f"unknown observation level {observes!r}")
