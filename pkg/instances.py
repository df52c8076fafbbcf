# instances.py
"""Generadores de instancias: modelo de señal mixta, soporte circulante y redes reales."""
import logging
import re
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import AdjacencyIOError, NonBooleanEntryError, NonSquareError
from model import InterferenceInstance

logger = logging.getLogger(__name__)

# roles de flujo: cada uno deriva su propia clave Philox
STREAM_MIXED = 0
STREAM_OVERLAY = 1
WORDS_PER_ENTRY = 4  # un bloque Philox (4 palabras de 64 bits) por entrada
_UNIT = 2.0 ** -53

ADJACENCY_SUFFIXES = (".csv", ".txt", ".adj")
_SPLIT = re.compile(r"[,\s]+")


# --- Modelos ---
class SignalModelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: Optional[int] = Field(None, ge=1)
    beta: float = Field(0.1, ge=0)
    s0: float = Field(20.0, gt=0)
    weak_factor: float = Field(0.001, gt=0, le=1)
    seed: int = Field(0, ge=0)


class AdjacencyMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    adj: np.ndarray
    name: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.adj.ndim != 2 or self.adj.shape[0] != self.adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {self.adj.shape}")
        if self.adj.dtype != bool:
            raise ValueError("adjacency entries must be boolean")
        return self

    @property
    def n(self) -> int:
        return int(self.adj.shape[0])


class AdjacencySummary(BaseModel):
    name: Optional[str] = None
    d: int
    max_degree: int
    fractional_sparsity: float


# ----------------- utils -----------------
def stream_key(seed: int, stream: int) -> np.ndarray:
    return np.random.SeedSequence(seed, spawn_key=(stream,)).generate_state(2, dtype=np.uint64)


def entry_words(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Bloques Philox de las entradas start..start+count-1, en orden fila-mayor.

    La entrada e sale siempre del contador e; el orden de generación no altera los valores.
    """
    bg = np.random.Philox(key=stream_key(seed, stream), counter=start)
    return bg.random_raw(WORDS_PER_ENTRY * count).reshape(count, WORDS_PER_ENTRY)


def _draw_magnitudes(words: np.ndarray, params: SignalModelParams):
    z = (words[..., 0] >> np.uint64(11)) * _UNIT * 2.0 - 1.0
    u = (words[..., 1] >> np.uint64(11)) * _UNIT
    strong = (words[..., 2] & np.uint64(1)) == 1
    values = np.where(strong, params.beta * z, params.weak_factor * params.beta * z)
    return values, u


# ----------------- generadores -----------------
def generate_mixed_signal(params: SignalModelParams) -> InterferenceInstance:
    if params.d is None:
        raise ValueError("mixed signal model needs d")
    d = params.d
    if params.s0 > d:
        raise ValueError(f"s0={params.s0} exceeds d={d}")
    words = entry_words(params.seed, STREAM_MIXED, 0, d * d).reshape(d, d, WORDS_PER_ENTRY)
    values, u = _draw_magnitudes(words, params)
    in_support = (u <= params.s0 / d) | np.eye(d, dtype=bool)
    effects = np.where(in_support, values, 0.0)
    return InterferenceInstance.from_effects(effects, label=f"mixed(d={d},beta={params.beta},s0={params.s0})")


def generate_circulant(d: int, s: int, delta: float) -> InterferenceInstance:
    if not 1 <= s <= d:
        raise ValueError(f"circulant support needs 1 <= s <= d, got s={s}, d={d}")
    idx = np.arange(d)
    mask = ((idx[None, :] - idx[:, None]) % d) < s
    return InterferenceInstance.from_effects(np.where(mask, float(delta), 0.0), label=f"circulant(d={d},s={s})")


def overlay_signal(adj: AdjacencyMatrix, params: SignalModelParams) -> InterferenceInstance:
    """Efectos heterogéneos sobre las aristas de `adj` más la diagonal; params.d se ignora."""
    n = adj.n
    support = adj.adj | np.eye(n, dtype=bool)
    words = entry_words(params.seed, STREAM_OVERLAY, 0, n * n).reshape(n, n, WORDS_PER_ENTRY)
    values, _ = _draw_magnitudes(words, params)
    return InterferenceInstance.from_effects(np.where(support, values, 0.0), label=adj.name)


# ----------------- adyacencias -----------------
def load_adjacency(path: Union[str, Path]) -> AdjacencyMatrix:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as e:
        raise AdjacencyIOError(f"cannot read adjacency file: {e.strerror or e}", path=str(path)) from e

    rows: List[List[float]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = [t for t in _SPLIT.split(line.strip()) if t]
        if not tokens:
            continue  # líneas en blanco
        parsed = []
        for col, tok in enumerate(tokens, start=1):
            try:
                value = float(tok)
            except ValueError:
                value = None
            if value not in (0.0, 1.0):
                raise NonBooleanEntryError(f"entry {tok!r} is not 0/1", path=str(path), row=len(rows) + 1, column=col)
            parsed.append(value)
        if rows and len(parsed) != len(rows[0]):
            raise NonSquareError(
                f"row has {len(parsed)} entries, expected {len(rows[0])}", path=str(path), row=len(rows) + 1
            )
        rows.append(parsed)

    if not rows:
        raise NonSquareError("adjacency file is empty", path=str(path))
    if len(rows) != len(rows[0]):
        raise NonSquareError(f"matrix is {len(rows)}x{len(rows[0])}", path=str(path))

    adj = np.array(rows) == 1.0
    if not np.array_equal(adj, adj.T):
        logger.warning("adjacency %s is not symmetric; using it as directed", path.name)
    return AdjacencyMatrix(adj=adj, name=path.stem)


def load_adjacency_dir(path: Union[str, Path]) -> List[AdjacencyMatrix]:
    path = Path(path)
    if not path.is_dir():
        raise AdjacencyIOError("not a directory", path=str(path))
    files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in ADJACENCY_SUFFIXES)
    logger.info("loading %d adjacency files from %s", len(files), path)
    return [load_adjacency(p) for p in files]


def summary_stats(adj: AdjacencyMatrix) -> AdjacencySummary:
    n = adj.n
    off_diagonal = adj.adj & ~np.eye(n, dtype=bool)
    max_degree = int(off_diagonal.sum(axis=1).max()) if n else 0
    return AdjacencySummary(
        name=adj.name, d=n, max_degree=max_degree,
        fractional_sparsity=max_degree / n if n else 0.0,
    )


def summary_table(summaries: List[AdjacencySummary]) -> pd.DataFrame:
    """Tabla tipo resumen de aldeas: count/mean/median/std/min/max de d y sparsity."""
    df = pd.DataFrame([s.model_dump() for s in summaries], columns=["name", "d", "max_degree", "fractional_sparsity"])
    cols = df[["d", "fractional_sparsity"]].astype(float)
    return pd.DataFrame({
        "count": cols.count(),
        "mean": cols.mean(),
        "median": cols.median(),
        "std": cols.std(),
        "min": cols.min(),
        "max": cols.max(),
    }).T
