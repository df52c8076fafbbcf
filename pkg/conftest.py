# conftest.py
import numpy as np
import pytest

from instances import SignalModelParams, generate_circulant, generate_mixed_signal


def rademacher(rng, n, d):
    return rng.integers(0, 2, size=(n, d)) * 2.0 - 1.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_mixed():
    return generate_mixed_signal(SignalModelParams(d=12, beta=0.1, s0=4, seed=7))


@pytest.fixture
def circulant_30():
    return generate_circulant(30, 3, 1.0 / 3.0)


@pytest.fixture
def adjacency_dir(tmp_path):
    (tmp_path / "a.csv").write_text("0,1,0\n1,0,1\n0,1,0\n", encoding="utf-8")
    (tmp_path / "b.csv").write_text("0 1 1 0 0\n1 0 0 0 0\n1 0 0 1 0\n0 0 1 0 1\n0 0 0 1 0\n", encoding="utf-8")
    (tmp_path / "notes.md").write_text("ignored\n", encoding="utf-8")
    return tmp_path
