import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixmode.advantages import (
    STD_GUARD,
    GroupRollout,
    mixed_advantage,
    mode_advantage,
    mode_stats,
    sample_advantage,
)
from mixmode.grammar import Label, ThinkingMode, canonical_response, parse
from mixmode.policy import StructuredAction

QUICK = ThinkingMode.QUICK_RESPONSE
SEMANTIC = ThinkingMode.SEMANTIC_ANALYSIS
PROSPECTIVE = ThinkingMode.PROSPECTIVE_SIMULATION


# -- independent oracle: plain-python standardization, no numpy ---------------

def oracle_standardize(values):
    mean = sum(values) / len(values)
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    if std < STD_GUARD:
        return [0.0] * len(values)
    return [(v - mean) / std for v in values]


def oracle_mode_advantage(rewards, modes):
    by_mode = {}
    for r, m in zip(rewards, modes):
        if m is not None:
            by_mode.setdefault(m, []).append(r)
    if len(by_mode) < 2:
        return [0.0] * len(rewards)
    keys = list(by_mode)
    normalized = oracle_standardize([sum(by_mode[k]) / len(by_mode[k]) for k in keys])
    per_mode = dict(zip(keys, normalized))
    return [per_mode[m] if m is not None else 0.0 for m in modes]


def make_group(rewards, modes):
    actions, responses = [], []
    for mode in modes:
        mode = mode or QUICK
        actions.append(StructuredAction(mode, Label.FAKE))
        responses.append(parse(canonical_response(mode, Label.FAKE)))
    g = len(rewards)
    return GroupRollout(
        sample=_FakeSample(),
        actions=actions,
        responses=responses,
        rewards=np.asarray(rewards, dtype=float),
        modes=list(modes),
        old_logprobs=np.zeros(g),
        ref_logprobs=np.zeros(g),
    )


class _FakeSample:
    id = 0


class TestSampleAdvantage:
    def test_constant_rewards_zero(self):
        assert np.array_equal(sample_advantage([1, 1, 1, 1]), np.zeros(4))

    def test_two_point_symmetry(self):
        assert sample_advantage([0, 2]) == pytest.approx([-1.0, 1.0])

    def test_worked_value_0112(self):
        # frozen from the plain-python oracle: mean 1, population std 1/sqrt(2)
        expected = [-math.sqrt(2), 0.0, 0.0, math.sqrt(2)]
        assert oracle_standardize([0, 1, 1, 2]) == pytest.approx(expected, abs=1e-12)
        assert sample_advantage([0, 1, 1, 2]) == pytest.approx(expected, abs=1e-12)

    def test_worked_value_0111(self):
        expected = [-math.sqrt(3), 1 / math.sqrt(3), 1 / math.sqrt(3), 1 / math.sqrt(3)]
        assert oracle_standardize([0, 1, 1, 1]) == pytest.approx(expected, abs=1e-12)
        assert sample_advantage([0, 1, 1, 1]) == pytest.approx(expected, abs=1e-12)

    def test_rejects_small_groups(self):
        with pytest.raises(ValueError):
            sample_advantage([1.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=16))
    @settings(max_examples=80)
    def test_matches_oracle(self, rewards):
        assert sample_advantage(rewards) == pytest.approx(
            oracle_standardize(rewards), abs=1e-9
        )

    @given(
        rewards=st.lists(st.floats(-50, 50), min_size=2, max_size=12),
        scale=st.floats(0.01, 100),
        shift=st.floats(-100, 100),
    )
    @settings(max_examples=60)
    def test_shift_scale_invariance(self, rewards, scale, shift):
        values = np.asarray(rewards)
        if values.std() < 1e-6:  # keep away from the guard boundary
            return
        transformed = sample_advantage(scale * values + shift)
        assert transformed == pytest.approx(sample_advantage(values), abs=1e-9)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=16))
    @settings(max_examples=60)
    def test_standardized_moments(self, rewards):
        adv = sample_advantage(rewards)
        if np.asarray(rewards, dtype=float).std() >= STD_GUARD:
            assert abs(adv.mean()) < 1e-9
            assert abs(adv.std() - 1.0) < 1e-9
        else:
            assert np.array_equal(adv, np.zeros(len(rewards)))


class TestModeAdvantage:
    def test_worked_two_mode_group(self):
        # R^quick = 0.5, R^semantic = 1.0 -> normalized [-1, +1]
        adv = mode_advantage([0, 1, 1, 1], [QUICK, QUICK, SEMANTIC, SEMANTIC])
        assert adv == pytest.approx([-1.0, -1.0, 1.0, 1.0], abs=1e-12)

    def test_single_mode_group_is_zero(self):
        assert np.array_equal(mode_advantage([0, 1, 2], [QUICK] * 3), np.zeros(3))

    def test_worked_three_mode_group(self):
        # averages (2, 0, 1): mean 1, population std sqrt(2/3)
        adv = mode_advantage([2, 0, 1], [QUICK, SEMANTIC, PROSPECTIVE])
        root = math.sqrt(3 / 2)
        assert adv == pytest.approx([root, -root, 0.0], abs=1e-12)
        assert adv[0] == pytest.approx(1.2247, abs=1e-4)

    def test_unclassifiable_excluded_and_zeroed(self):
        adv = mode_advantage([1, 0, 2, 1], [QUICK, None, SEMANTIC, SEMANTIC])
        # R^quick = 1, R^semantic = 1.5 -> normalized [-1, +1]; None -> 0
        assert adv == pytest.approx([-1.0, 0.0, 1.0, 1.0], abs=1e-12)
        stats = mode_stats([1, 0, 2, 1], [QUICK, None, SEMANTIC, SEMANTIC])
        assert stats.n == 2
        assert stats.averages[SEMANTIC] == pytest.approx(1.5)

    def test_equal_mode_averages_zero(self):
        adv = mode_advantage([1, 1], [QUICK, SEMANTIC])
        assert np.array_equal(adv, np.zeros(2))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mode_advantage([1, 2, 3], [QUICK, SEMANTIC])

    @given(
        rewards=st.lists(st.floats(0, 2), min_size=2, max_size=16),
        data=st.data(),
    )
    @settings(max_examples=80)
    def test_matches_oracle(self, rewards, data):
        modes = data.draw(
            st.lists(
                st.sampled_from([QUICK, SEMANTIC, PROSPECTIVE, None]),
                min_size=len(rewards),
                max_size=len(rewards),
            )
        )
        assert mode_advantage(rewards, modes) == pytest.approx(
            oracle_mode_advantage(rewards, modes), abs=1e-9
        )

    @given(
        rewards=st.lists(st.floats(0, 2), min_size=4, max_size=12),
        data=st.data(),
    )
    @settings(max_examples=40)
    def test_normalized_mode_values_standardized(self, rewards, data):
        modes = data.draw(
            st.lists(
                st.sampled_from([QUICK, SEMANTIC, PROSPECTIVE]),
                min_size=len(rewards),
                max_size=len(rewards),
            )
        )
        stats = mode_stats(rewards, modes)
        averages = np.array(list(stats.averages.values()))
        if stats.n >= 2 and averages.std() >= STD_GUARD:
            adv = mode_advantage(rewards, modes)
            distinct = {}
            for value, mode in zip(adv, modes):
                distinct[mode] = value
            values = np.array(list(distinct.values()))
            assert abs(values.mean()) < 1e-9
            assert abs(values.std() - 1.0) < 1e-9


class TestMixedAdvantage:
    def test_single_mode_group_equals_sample_advantage(self):
        group = make_group([0, 1, 2, 1], [QUICK] * 4)
        vector = mixed_advantage(group)
        assert np.array_equal(vector.mode_level, np.zeros(4))
        assert np.array_equal(vector.mixed, vector.sample_level)

    def test_worked_composition(self):
        group = make_group([0, 1, 1, 1], [QUICK, QUICK, SEMANTIC, SEMANTIC])
        vector = mixed_advantage(group)
        a_sample = [-math.sqrt(3), 1 / math.sqrt(3), 1 / math.sqrt(3), 1 / math.sqrt(3)]
        a_mode = [-1.0, -1.0, 1.0, 1.0]
        assert vector.sample_level == pytest.approx(a_sample, abs=1e-12)
        assert vector.mode_level == pytest.approx(a_mode, abs=1e-12)
        assert vector.mixed == pytest.approx(np.add(a_sample, a_mode), abs=1e-12)

    def test_vanilla_flag_drops_mode_term(self):
        group = make_group([0, 1, 1, 1], [QUICK, QUICK, SEMANTIC, SEMANTIC])
        vector = mixed_advantage(group, vanilla=True)
        assert np.array_equal(vector.mode_level, np.zeros(4))
        assert np.array_equal(vector.mixed, vector.sample_level)

    def test_mixture_is_exact_sum(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            g = int(rng.integers(2, 17))
            rewards = rng.integers(0, 3, g).astype(float)
            modes = [
                [QUICK, SEMANTIC, PROSPECTIVE, None][i] for i in rng.integers(0, 4, g)
            ]
            group = make_group(rewards, modes)
            vector = mixed_advantage(group)
            assert np.array_equal(vector.mixed, vector.sample_level + vector.mode_level)


class TestGroupRollout:
    def test_rejects_mismatched_lengths(self):
        group = make_group([0, 1], [QUICK, QUICK])
        with pytest.raises(ValueError):
            GroupRollout(
                sample=group.sample,
                actions=group.actions,
                responses=group.responses,
                rewards=np.array([0.0, 1.0, 2.0]),
                modes=group.modes,
                old_logprobs=group.old_logprobs,
                ref_logprobs=group.ref_logprobs,
            )

    def test_rejects_singleton_group(self):
        with pytest.raises(ValueError):
            make_group([1.0], [QUICK])
