# acceptance_test.py
"""Comportamiento de extremo a extremo: oráculo, recuperación de signos sin ruido y curvas de regret."""
import itertools
import os

import numpy as np
import pytest

from cli import emit_csv
from environment import Environment
from harness import ExperimentConfig, MixedInstanceSpec, instance_for, run_many, run_one
from instances import SignalModelParams, generate_circulant, generate_mixed_signal
from model import InterferenceInstance, expected_reward, oracle_action, theta_of
from policies import (
    BaselineSpec,
    NetcPolicy,
    NetcSpec,
    NseFsPolicy,
    NseFsSpec,
    NsePolicy,
    NseSpec,
    OraclePolicy,
    exploration_length,
)

WORKERS = max(1, min(os.cpu_count() or 1, 8))


def test_oracle_never_regrets():
    rng = np.random.default_rng(0)
    for k in range(20):
        d = int(rng.integers(2, 51))
        inst = generate_mixed_signal(SignalModelParams(d=d, beta=0.1, s0=min(5, d), seed=k))
        result = run_one(Environment(inst, seed=k), OraclePolicy(inst), 30)
        assert result.trace.final == 0.0


def test_oracle_action_is_hypercube_argmax():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = int(rng.integers(1, 11))
        inst = InterferenceInstance.from_effects(rng.uniform(-0.2, 0.2, (d, d)) * (rng.random((d, d)) < 0.5))
        cube = np.array(list(itertools.product([-1.0, 1.0], repeat=d)))
        best = (cube @ theta_of(inst)).max()
        assert expected_reward(inst, oracle_action(theta_of(inst))) == pytest.approx(best, abs=1e-12)


# --- recuperación de signos sin ruido ---
def _post_commit_regret(result, first_clean_round):
    return result.trace.per_round[first_clean_round:]


def test_nse_fs_noiseless_circulant():
    inst = generate_circulant(30, 3, 1.0 / 3.0)
    policy = NseFsPolicy(512, inst.support.copy(), seed=11, threshold_constant=0.5)
    result = run_one(Environment(inst, noise_std=0.0, seed=12), policy, 512)
    assert not policy.undetermined.any()
    np.testing.assert_array_equal(policy.committed_sign, oracle_action(theta_of(inst)))
    last_commit = int(policy.commit_round.max())
    assert np.all(_post_commit_regret(result, last_commit) == 0.0)


def test_netc_noiseless_circulant():
    inst = generate_circulant(30, 3, 1.0 / 3.0)
    T1 = exploration_length(512, 3)
    policy = NetcPolicy(30, 512, 3, lam=0.01, seed=13)
    assert policy.T1 == T1 == 134
    result = run_one(Environment(inst, noise_std=0.0, seed=14), policy, 512)
    np.testing.assert_array_equal(policy.committed, oracle_action(theta_of(inst)))
    assert np.all(_post_commit_regret(result, T1) == 0.0)


def test_nse_noiseless_sparse_theta():
    # el estimador one-hot sin centrar arrastra ruido cruzado de todas las columnas activas;
    # con θ disperso la recuperación exacta es estable
    effects = np.zeros((30, 30))
    effects[[0, 1, 2], [0, 1, 2]] = [1.0, -1.0, 1.0]
    inst = InterferenceInstance.from_effects(effects)
    policy = NsePolicy(512, inst.column_profile(), seed=15, threshold="practical", c_tau=1.0)
    result = run_one(Environment(inst, noise_std=0.0, seed=16), policy, 512)
    assert not policy.undetermined.any()
    np.testing.assert_array_equal(policy.committed_sign[:3], [1.0, -1.0, 1.0])
    assert np.all(_post_commit_regret(result, int(policy.commit_round.max())) == 0.0)


# --- curvas de regret (lentas) ---
def _scaled_fig1(**kw):
    base = dict(
        id="fig1-scaled", T=5000, n_runs=30, base_seed=0,
        instance=MixedInstanceSpec(d=50, beta=0.1, s0=10),
        policies=[
            BaselineSpec(),
            NetcSpec(lam=0.035, T1=100),
            NseSpec(threshold="practical", c_tau=0.3),
            NseFsSpec(threshold="practical", delta=0.05, threshold_constant=8.0),
        ],
    )
    base.update(kw)
    return ExperimentConfig(**base)


def _random_play_mean(cfg):
    # E[regret] de jugar Rademacher en cada ronda: Σ_j |θ_j| por ronda
    return float(np.mean([np.abs(theta_of(instance_for(cfg, r))).sum() * cfg.T for r in range(cfg.n_runs)]))


@pytest.mark.slow
def test_structure_aware_policies_beat_random_play(tmp_path):
    cfg = _scaled_fig1()
    results = [run_many(cfg, spec, workers=WORKERS) for spec in cfg.policies]
    final = {r.policy: r.mean[-1] for r in results}
    random_play = _random_play_mean(cfg)
    for name in ("baseline", "netc", "nse", "nse_fs"):
        assert final[name] <= random_play, (final, random_play)
    assert final["nse_fs"] <= 0.8 * random_play, (final, random_play)
    assert final["nse_fs"] <= 1.25 * final["nse"], final

    # misma semilla, otra ejecución (y otro orden de réplicas) → mismo CSV byte a byte
    again = [run_many(cfg, spec, workers=1, order=list(reversed(range(cfg.n_runs)))) for spec in cfg.policies]
    a = emit_csv(results, tmp_path / "a.csv")
    b = emit_csv(again, tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.slow
def test_netc_per_individual_regret_is_flat_in_d():
    finals = []
    for d in (50, 100, 200):
        cfg = ExperimentConfig(id=f"flat-d{d}", T=4000, n_runs=10, base_seed=1,
                               instance=MixedInstanceSpec(d=d, beta=0.1, s0=10),
                               policies=[NetcSpec(lam=0.035, T1=100)])
        finals.append(run_many(cfg, cfg.policies[0], workers=WORKERS).per_individual_mean[-1])
    assert max(finals) / min(finals) <= 1.5, finals
