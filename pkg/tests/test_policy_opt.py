"""Contrastive policy optimization: distances, score algebra, training loop."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefopt import nn
from prefopt.data import DataError, generate_pref_dataset, sample_segment_pair
from prefopt.envs import make_env
from prefopt.policy_opt import (PolicyTrainConfig, batch_score, load_policy,
                                pair_score, pair_score_from_distances,
                                policy_action, policy_init, pseudo_label,
                                save_policy, score_oracle_check,
                                segment_distance, train_policy,
                                transition_distance)
from prefopt.predictor import PredictorTrainConfig, predictor_init, train_predictor

from test_predictor import constant_segment, first_coordinate_predictor

TINY_PRED = PredictorTrainConfig(embed_dim=6, encoder_hidden=(8,), head_hidden=(4,))


@pytest.fixture()
def pm_policy(pm_spec):
    return policy_init(pm_spec, np.random.default_rng(2), hidden=(8,), dropout=0.0)


class TestTransitionDistance:
    def test_perfect_match_is_smoothed_zero(self, pm_policy, rng):
        state = rng.normal(size=4)
        action = policy_action(pm_policy, state)
        assert 0.0 < transition_distance(pm_policy, state, action) <= 1e-6

    def test_known_offset(self, pm_policy, rng):
        state = rng.normal(size=4)
        action = policy_action(pm_policy, state) - np.array([3.0, 4.0])
        assert transition_distance(pm_policy, state, action) == \
            pytest.approx(5.0, abs=1e-9)

    def test_symmetric_in_sign_of_gap(self, pm_policy, rng):
        state = rng.normal(size=4)
        base = policy_action(pm_policy, state)
        gap = np.array([0.7, -0.2])
        assert transition_distance(pm_policy, state, base + gap) == \
            transition_distance(pm_policy, state, base - gap)


class TestSegmentDistance:
    def test_policy_matching_segment(self, pm_data, pm_policy):
        dataset, _ = pm_data
        seg = dataset.segment(0, 0, 6)
        seg.actions = np.stack([policy_action(pm_policy, s) for s in seg.states])
        assert segment_distance(pm_policy, seg) <= 1e-6

    def test_two_transition_mean(self, pm_data, pm_policy):
        """k=1 with transition distances (2, 4) averages to 3."""
        dataset, _ = pm_data
        seg = dataset.segment(0, 0, 1)
        a0 = policy_action(pm_policy, seg.states[0]) - np.array([2.0, 0.0])
        a1 = policy_action(pm_policy, seg.states[1]) - np.array([0.0, 4.0])
        seg.actions = np.stack([a0, a1])
        assert segment_distance(pm_policy, seg) == pytest.approx(3.0, abs=1e-9)

    def test_matches_bruteforce_loop(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        for _ in range(10):
            seg, _ = sample_segment_pair(dataset, 13, rng)
            brute = sum(transition_distance(pm_policy, seg.states[t], seg.actions[t])
                        for t in range(14)) / 14
            assert segment_distance(pm_policy, seg) == pytest.approx(brute, abs=1e-12)


class TestPairScoreAlgebra:
    def test_equal_distances_lambda_one(self):
        for d in (0.0, 0.5, 2.0, 17.0):
            assert pair_score_from_distances(d, d, 1.0) == \
                pytest.approx(-math.log(2.0), abs=1e-12)

    def test_unpreferred_far_away_limit(self):
        # strict negativity survives until exp(-d) underflows around d ~ 745
        s = pair_score_from_distances(0.0, 100.0, 1.0)
        assert -1e-8 < s < 0.0

    def test_half_lambda_closed_form(self):
        """d_i=1, d_j=2, lam=0.5: exponent cancels, score is -ln 2."""
        assert pair_score_from_distances(1.0, 2.0, 0.5) == \
            pytest.approx(-math.log(2.0), abs=1e-12)

    @settings(deadline=None, max_examples=200)
    @given(d0=st.floats(0, 50), d1=st.floats(0, 50),
           lam=st.floats(0.01, 1.0))
    def test_negativity(self, d0, d1, lam):
        assert pair_score_from_distances(d0, d1, lam) < 0.0

    @settings(deadline=None, max_examples=200)
    @given(d0=st.floats(0, 50), d1=st.floats(0, 50), alpha=st.floats(0, 100))
    def test_shift_invariance_at_lambda_one(self, d0, d1, alpha):
        base = pair_score_from_distances(d0, d1, 1.0)
        shifted = pair_score_from_distances(d0 + alpha, d1 + alpha, 1.0)
        assert abs(base - shifted) <= 1e-12

    @settings(deadline=None, max_examples=100)
    @given(d0=st.floats(0, 20), d1=st.floats(0, 20), lam=st.floats(0.05, 0.9))
    def test_conservative_lambda_decreases_under_shift(self, d0, d1, lam):
        shifts = [0.0, 0.5, 1.0, 2.0]
        scores = [pair_score_from_distances(d0 + a, d1 + a, lam) for a in shifts]
        for earlier, later in zip(scores, scores[1:]):
            assert later < earlier

    @settings(deadline=None, max_examples=200)
    @given(d0=st.floats(0, 30), d1=st.floats(0, 30))
    def test_softmax_normalization_at_lambda_one(self, d0, d1):
        total = math.exp(pair_score_from_distances(d0, d1, 1.0)) + \
            math.exp(pair_score_from_distances(d1, d0, 1.0))
        assert abs(total - 1.0) <= 1e-12

    @settings(deadline=None, max_examples=100)
    @given(d0=st.floats(0, 20), d1=st.floats(0, 20), lam=st.floats(0.05, 1.0))
    def test_monotone_in_each_distance(self, d0, d1, lam):
        base = pair_score_from_distances(d0, d1, lam)
        assert pair_score_from_distances(d0 + 0.3, d1, lam) < base
        assert pair_score_from_distances(d0, d1 + 0.3, lam) > base

    def test_lambda_range_enforced(self):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                pair_score_from_distances(1.0, 1.0, bad)

    def test_pair_score_consistent_with_distances(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        a, b = sample_segment_pair(dataset, 9, rng)
        expected = pair_score_from_distances(
            segment_distance(pm_policy, a), segment_distance(pm_policy, b), 0.7)
        assert pair_score(pm_policy, a, b, 0.7) == expected


class TestBatchScore:
    def test_single_triple_matches_pair_score(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        a, b = sample_segment_pair(dataset, 7, rng)
        score, _ = batch_score(pm_policy, [(a, b, 0.0)], lam=0.5)
        assert score == pytest.approx(pair_score(pm_policy, a, b, 0.5), abs=1e-12)

    def test_relabel_swap_symmetry(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        triples, flipped = [], []
        for y in (0.0, 1.0, 0.5, 0.0):
            a, b = sample_segment_pair(dataset, 7, rng)
            triples.append((a, b, y))
            flipped.append((b, a, 1.0 - y))
        s1, _ = batch_score(pm_policy, triples, lam=0.4)
        s2, _ = batch_score(pm_policy, flipped, lam=0.4)
        assert s1 == s2

    def test_tie_label_averages_orderings(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        a, b = sample_segment_pair(dataset, 7, rng)
        s_tie, _ = batch_score(pm_policy, [(a, b, 0.5)], lam=0.3)
        s0, _ = batch_score(pm_policy, [(a, b, 0.0)], lam=0.3)
        s1, _ = batch_score(pm_policy, [(a, b, 1.0)], lam=0.3)
        assert s_tie == pytest.approx(0.5 * (s0 + s1), abs=1e-12)

    def test_gradient_matches_finite_differences(self, pm_data):
        dataset, _ = pm_data
        rng = np.random.default_rng(31)
        spec = make_env("pointmass2d")
        policy = policy_init(spec, rng, hidden=(8,), dropout=0.0)
        triples = []
        for y in (0.0, 1.0, 0.5):
            a, b = sample_segment_pair(dataset, 5, rng)
            triples.append((a, b, y))
        report = nn.check_gradient(lambda: batch_score(policy, triples, lam=0.5),
                                   policy.net)
        assert report["pass"], report

    def test_scripted_vs_pseudo_labels_agree_when_predictor_agrees(
            self, pm_data, pm_policy, rng):
        """Relabeling consistency: identical labels give identical scores."""
        from prefopt.data import scripted_label
        dataset, _ = pm_data
        predictor, _ = train_predictor(
            dataset, generate_pref_dataset(dataset, 120, 10, seed=2),
            PredictorTrainConfig(steps=600, seed=4, log_every=600))
        scripted, pseudo = [], []
        for _ in range(40):
            a, b = sample_segment_pair(dataset, 10, rng)
            y_s = scripted_label(a, b)
            y_p = float(pseudo_label(predictor, a, b))
            if y_s == y_p:
                scripted.append((a, b, y_s))
                pseudo.append((a, b, y_p))
        assert len(scripted) >= 20  # the predictor mostly agrees
        s_scripted, _ = batch_score(pm_policy, scripted, lam=0.5)
        s_pseudo, _ = batch_score(pm_policy, pseudo, lam=0.5)
        assert s_scripted == s_pseudo

    def test_empty_batch_rejected(self, pm_policy):
        with pytest.raises(DataError):
            batch_score(pm_policy, [], lam=0.5)

    def test_bad_label_rejected(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        a, b = sample_segment_pair(dataset, 7, rng)
        with pytest.raises(DataError):
            batch_score(pm_policy, [(a, b, 0.7)], lam=0.5)


class TestPseudoLabel:
    def test_identical_segments_resolve_to_one(self, pm_data, rng):
        dataset, _ = pm_data
        model = predictor_init(4, 2, rng, TINY_PRED)
        seg, _ = sample_segment_pair(dataset, 8, rng)
        assert pseudo_label(model, seg, seg) == 1

    def test_confident_preference_gives_zero(self, pm_data):
        dataset, _ = pm_data
        model = first_coordinate_predictor(4, 2)
        hi = constant_segment(dataset, math.log(9.0))  # p = 0.9
        lo = constant_segment(dataset, 0.0)
        assert pseudo_label(model, hi, lo) == 0
        assert pseudo_label(model, lo, hi) == 1

    def test_antisymmetric_when_not_tied(self, pm_data, rng):
        dataset, _ = pm_data
        model = predictor_init(4, 2, rng, TINY_PRED)
        from prefopt.predictor import pref_prob
        for _ in range(30):
            a, b = sample_segment_pair(dataset, 8, rng)
            if pref_prob(model, a, b) != 0.5:
                assert pseudo_label(model, a, b) != pseudo_label(model, b, a)


class TestScoreOracle:
    def test_random_tiny_instances_agree(self, pm_data, rng):
        dataset, _ = pm_data
        spec = make_env("pointmass2d")
        for trial in range(10):
            policy = policy_init(spec, np.random.default_rng(trial), hidden=(8,),
                                 dropout=0.0)
            k = int(rng.integers(0, 5))
            triples = []
            for _ in range(int(rng.integers(1, 9))):
                a, b = sample_segment_pair(dataset, k, rng)
                triples.append((a, b, float(rng.choice([0.0, 0.5, 1.0]))))
            lam = float(rng.uniform(0.05, 1.0))
            assert score_oracle_check(policy, triples, lam, tol=1e-9)

    def test_identical_segments_give_log_two(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        seg, _ = sample_segment_pair(dataset, 3, rng)
        score, _ = batch_score(pm_policy, [(seg, seg, 0.0)], lam=1.0)
        assert score == pytest.approx(-math.log(2.0), abs=1e-12)
        assert score_oracle_check(pm_policy, [(seg, seg, 0.0)], 1.0)

    def test_size_limits_enforced(self, pm_data, pm_policy, rng):
        dataset, _ = pm_data
        a, b = sample_segment_pair(dataset, 6, rng)
        with pytest.raises(DataError):
            score_oracle_check(pm_policy, [(a, b, 0.0)], 0.5)  # k = 6 > 4
        small = [(x, y, 0.0) for x, y in
                 (sample_segment_pair(dataset, 2, rng) for _ in range(9))]
        with pytest.raises(DataError):
            score_oracle_check(pm_policy, small, 0.5)


class TestPolicyModel:
    def test_outputs_always_inside_box(self, pm_spec, rng):
        policy = policy_init(pm_spec, rng)
        for scale in (1.0, 10.0, 1000.0):
            a = policy_action(policy, rng.normal(size=4) * scale)
            assert np.all(a > pm_spec.action_low) and np.all(a < pm_spec.action_high)

    def test_rejects_asymmetric_box(self, rng):
        spec = make_env("pointmass2d")
        spec.action_low = np.array([-1.0, -0.5])
        with pytest.raises(ValueError, match="symmetric"):
            policy_init(spec, rng)

    def test_checkpoint_roundtrip(self, pm_spec, tmp_path, rng):
        policy = policy_init(pm_spec, rng)
        save_policy(tmp_path / "p.json", policy)
        loaded = load_policy(tmp_path / "p.json")
        x = rng.normal(size=4)
        assert np.array_equal(policy_action(loaded, x), policy_action(policy, x))
        assert loaded.env == "pointmass2d"


class TestTrainPolicy:
    @pytest.fixture(scope="class")
    def trained_predictor(self, pm_data):
        dataset, _ = pm_data
        prefs = generate_pref_dataset(dataset, 120, 10, seed=2)
        model, _ = train_predictor(dataset, prefs,
                                   PredictorTrainConfig(steps=400, seed=4, log_every=400))
        return model

    def test_zero_steps_returns_initialization(self, pm_data, pm_spec,
                                               trained_predictor):
        dataset, manifest = pm_data
        cfg = PolicyTrainConfig(steps=0, seed=9, k=10)
        model, metrics = train_policy(dataset, trained_predictor, cfg, pm_spec,
                                      manifest.R_random, manifest.R_expert)
        fresh = policy_init(pm_spec, np.random.default_rng((9, 0)),
                            cfg.hidden, cfg.dropout)
        for a, b in zip(model.net.weights, fresh.net.weights):
            assert a.tobytes() == b.tobytes()
        assert metrics == []

    def test_deterministic_metrics(self, pm_data, pm_spec, trained_predictor):
        dataset, manifest = pm_data
        cfg = PolicyTrainConfig(steps=150, seed=3, k=10, log_every=50,
                                eval_every=150, eval_episodes=2)
        _, m1 = train_policy(dataset, trained_predictor, cfg, pm_spec,
                             manifest.R_random, manifest.R_expert)
        _, m2 = train_policy(dataset, trained_predictor, cfg, pm_spec,
                             manifest.R_random, manifest.R_expert)
        assert m1 == m2
        assert [row["step"] for row in m1] == [50, 100, 150]
        assert m1[-1]["eval_return_raw"] is not None

    def test_lambda_validation(self):
        with pytest.raises(ValueError):
            PolicyTrainConfig(lam=0.0)
        with pytest.raises(ValueError):
            PolicyTrainConfig(lam=1.2)

    def test_k_bound(self, pm_data, pm_spec, trained_predictor):
        dataset, manifest = pm_data
        cfg = PolicyTrainConfig(steps=5, k=dataset.horizon)
        with pytest.raises(DataError):
            train_policy(dataset, trained_predictor, cfg, pm_spec,
                         manifest.R_random, manifest.R_expert)
