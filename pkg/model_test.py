# model_test.py
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from errors import InvalidActionError
from model import (
    InterferenceInstance,
    RegretTrace,
    check_action,
    column_profile,
    expected_reward,
    instantaneous_regret,
    oracle_action,
    row_sparsity,
    sign_pm,
    theta_of,
)


def _matrices(max_d=6):
    return st.integers(1, max_d).flatmap(
        lambda d: arrays(np.float64, (d, d), elements=st.one_of(st.just(0.0), st.floats(-1, 1, allow_nan=False)))
    )


def test_support_is_nonzero_pattern():
    inst = InterferenceInstance.from_effects(np.array([[0.5, 0.0], [0.2, -0.1]]))
    assert inst.support.tolist() == [[True, False], [True, True]]
    assert inst.d == 2


def test_mismatched_support_rejected():
    with pytest.raises(ValueError):
        InterferenceInstance(effects=np.eye(2), support=np.ones((2, 2), dtype=bool), assumption_compliant=True)


def test_instance_arrays_are_read_only():
    inst = InterferenceInstance.from_effects(np.eye(3) * 0.5)
    with pytest.raises(ValueError):
        inst.effects[0, 0] = 1.0


def test_assumption_flag():
    assert InterferenceInstance.from_effects(np.full((2, 2), 0.5)).assumption_compliant
    assert not InterferenceInstance.from_effects(np.full((2, 2), 0.6)).assumption_compliant


def test_theta_and_profile_example():
    effects = np.array([[0.3, 0.0, -0.1], [0.2, 0.1, 0.0], [0.0, 0.0, 0.4]])
    inst = InterferenceInstance.from_effects(effects)
    np.testing.assert_array_equal(theta_of(inst), effects.sum(axis=0))
    assert column_profile(inst).tolist() == [2, 1, 2]
    assert row_sparsity(inst) == 2


def test_sign_of_zero_is_plus_one():
    assert sign_pm(np.array([0.0, -0.0, -2.0, 3.0])).tolist() == [1.0, 1.0, -1.0, 1.0]


@pytest.mark.parametrize("bad", [np.array([1.0, 0.0]), np.array([1.0, 1.0, 1.0]), np.array([0.5, -1.0])])
def test_check_action_rejects(bad):
    with pytest.raises(InvalidActionError):
        check_action(bad, 2)


def test_regret_trace_cumulative():
    tr = RegretTrace(per_round=np.array([0.0, 1.5, 0.5]))
    assert tr.cumulative.tolist() == [0.0, 1.5, 2.0]
    assert tr.final == 2.0
    assert RegretTrace(per_round=np.zeros(0)).final == 0.0


@settings(deadline=None, max_examples=60)
@given(_matrices(), st.data())
def test_regret_non_negative_and_zero_at_oracle(effects, data):
    inst = InterferenceInstance.from_effects(effects)
    a_star = oracle_action(theta_of(inst))
    assert instantaneous_regret(inst, a_star) == 0.0
    bits = data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=inst.d, max_size=inst.d))
    a = np.array(bits)
    r = instantaneous_regret(inst, a)
    assert r >= 0.0
    assert r == pytest.approx(expected_reward(inst, a_star) - expected_reward(inst, a), abs=1e-12)


@settings(deadline=None, max_examples=40)
@given(_matrices(5))
def test_oracle_matches_brute_force(effects):
    inst = InterferenceInstance.from_effects(effects)
    best = max(expected_reward(inst, np.array(a)) for a in itertools.product([-1.0, 1.0], repeat=inst.d))
    assert expected_reward(inst, oracle_action(theta_of(inst))) == pytest.approx(best, abs=1e-12)


@settings(deadline=None, max_examples=60)
@given(_matrices())
def test_column_profile_bounds(effects):
    inst = InterferenceInstance.from_effects(effects)
    rho = column_profile(inst)
    assert rho.sum() == int(np.count_nonzero(effects))
    assert rho.sum() <= inst.d * row_sparsity(inst)
    assert np.all((rho >= 0) & (rho <= inst.d))
