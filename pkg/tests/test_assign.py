import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from lanematch._validation import LaneMatchError, ModelIncompatibleError
from lanematch.assign import (
    AssignerConfig,
    ClassicalAssigner,
    LabeledPair,
    MatchNetAssigner,
    assign_classical,
    assign_from_scores,
    assign_matchnet,
    balance_sample,
    dynamic_k,
    make_targets,
)
from lanematch.cost import classical_cost_matrix, pair_loss_matrix
from lanematch.lane import RowGrid
from lanematch.matchnet import MatchNetClassifier, MlpModel
from lanematch.synth import gen_synthetic, preset, record_lanes

from conftest import random_lane, vertical
from oracles import brute_capacitated

GRID = RowGrid(72, 320, 800)


class TestDynamicK:
    @pytest.mark.parametrize("ious,k", [
        ([1.0, 1.0, 1.0, 0.5], 3),
        ([0.0, 0.0], 1),
        ([], 1),
        ([1.55, 1.55, 1.55, 1.55], 4),
        ([0.9, 0.9, 0.9, 0.9, 0.9], 3),  # only the top four count
    ])
    def test_examples(self, ious, k):
        assert dynamic_k(ious) == k

    @given(st.lists(st.floats(0, 1), max_size=20), st.integers(1, 8))
    def test_range(self, ious, k_max):
        assert 1 <= dynamic_k(ious, k_max) <= k_max


class TestAssignClassical:
    def test_dominant_candidate(self):
        gt = vertical(GRID, 300)
        preds = [vertical(GRID, 340, score=0.4), vertical(GRID, 300, score=0.9), vertical(GRID, 200, score=0.3)]
        a = assign_classical(preds, [gt])
        assert (1, 0) in a.pairs()
        assert a.method == "classical"

    def test_disjoint_gives_one_lowest_cost(self):
        gt = vertical(GRID, 100)
        preds = [vertical(GRID, x, score=s) for x, s in [(400, 0.5), (300, 0.5), (600, 0.9)]]
        a = assign_classical(preds, [gt])
        cost, _ = classical_cost_matrix(preds, [gt])
        assert a.k == [1]
        assert a.pairs() == {(int(np.argmin(cost[:, 0])), 0)}

    def test_no_predictions(self):
        a = assign_classical([], [vertical(GRID, 10)])
        assert a.no_predictions and a.n_positives == 0

    def test_no_gts(self):
        a = assign_classical([vertical(GRID, 10)], [])
        assert a.positives == [] and not a.no_predictions

    def test_k_respected(self):
        gt = vertical(GRID, 300)
        preds = [vertical(GRID, 300, score=s) for s in (0.8, 0.7, 0.6, 0.5, 0.4)]
        preds.append(vertical(GRID, 302, score=0.9))
        a = assign_classical(preds, [gt])
        assert a.k == [4] and a.counts() == [4]
        cost, _ = classical_cost_matrix(preds, [gt])
        assert a.pairs() == {(int(p), 0) for p in np.argsort(cost[:, 0])[:4]}

    @pytest.mark.parametrize("seed", range(60))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        preds = [random_lane(rng, GRID) for _ in range(int(rng.integers(1, 8)))]
        gts = [random_lane(rng, GRID) for _ in range(int(rng.integers(1, 4)))]
        a = assign_classical(preds, gts)
        cost, liou = classical_cost_matrix(preds, gts)
        ks = [dynamic_k(liou[:, j]) for j in range(len(gts))]
        n, cov, total, chosen = brute_capacitated(cost, ks)
        assert a.pairs() == chosen
        assert sum(cost[p, j] for p, j in a.pairs()) == pytest.approx(total)

    def test_estimator_wrapper(self):
        est = ClassicalAssigner(k_max=2, lambda0=-2.0)
        assert clone(est).get_params()["lambda0"] == -2.0
        gt = vertical(GRID, 300)
        preds = [vertical(GRID, 300, score=0.8) for _ in range(4)]
        assert est.fit().assign(preds, [gt]).counts() == [2]


def test_structural_invariants_over_many_scenes():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n_gt = int(rng.integers(1, 4))
        preds = [random_lane(rng, GRID) for _ in range(int(rng.integers(0, 7)))]
        gts = [random_lane(rng, GRID) for _ in range(n_gt)]
        a = assign_classical(preds, gts)
        owners = [p for items in a.positives for p, _ in items]
        assert len(owners) == len(set(owners))
        assert all(c <= 4 for c in a.counts())
        if len(preds) >= n_gt:
            assert all(c >= 1 for c in a.counts())
        scores = rng.uniform(size=(len(preds), n_gt))
        m = assign_from_scores(scores)
        owners = [p for items in m.positives for p, _ in items]
        assert len(owners) == len(set(owners))


class TestAssignMatchNet:
    def test_all_below_threshold(self):
        a = assign_from_scores(np.array([[0.2], [0.69]]))
        assert a.counts() == [0]

    def test_threshold_cut(self):
        a = assign_from_scores(np.array([[0.9], [0.75], [0.4]]))
        assert a.counts() == [2]
        assert a.positives[0] == [(0, 0.9), (1, 0.75)]

    def test_conflict_goes_to_best_gt(self):
        a = assign_from_scores(np.array([[0.8, 0.6]]))
        assert a.pairs() == {(0, 0)}

    def test_conflict_both_above(self):
        a = assign_from_scores(np.array([[0.75, 0.95]]))
        assert a.pairs() == {(0, 1)}

    def test_k_cap_keeps_best(self):
        cfg = AssignerConfig(matchnet_k_cap=1)
        a = assign_from_scores(np.array([[0.8], [0.95], [0.9]]), cfg)
        assert a.pairs() == {(1, 0)}

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.01, 0.98), st.floats(0.0, 0.5))
    def test_threshold_monotone(self, seed, t, dt):
        scores = np.random.default_rng(seed).uniform(size=(6, 3))
        t2 = min(t + dt, 0.99)
        lo = assign_from_scores(scores, AssignerConfig(matchnet_threshold=t)).n_positives
        hi = assign_from_scores(scores, AssignerConfig(matchnet_threshold=t2)).n_positives
        assert hi <= lo

    def test_zero_model_scores_half(self):
        model = MlpModel.init((6, 4, 1), seed=0)
        for w in model.weights:
            w[:] = 0
        preds = [vertical(GRID, 100), vertical(GRID, 200)]
        assert assign_matchnet(preds, [vertical(GRID, 100)], model).n_positives == 0
        cfg = AssignerConfig(matchnet_threshold=0.4)
        assert assign_matchnet(preds, [vertical(GRID, 100)], model, cfg).n_positives == 2

    def test_dimension_mismatch(self):
        model = MlpModel.init((5, 4, 1), seed=0)
        with pytest.raises(ModelIncompatibleError):
            assign_matchnet([vertical(GRID, 100)], [vertical(GRID, 100)], model)

    def test_no_predictions_flag(self):
        model = MlpModel.init((6, 4, 1), seed=0)
        a = assign_matchnet([], [vertical(GRID, 10)], model)
        assert a.no_predictions and a.counts() == [0]


class TestMakeTargets:
    def test_good_positive_is_plus_one(self):
        gt = vertical(GRID, 300)
        [pair] = make_targets([vertical(GRID, 300, score=0.9)], [gt])
        assert pair.classical_positive and pair.pair_loss < 0.3 and pair.label == 1

    def test_positive_with_high_loss_is_minus_one(self):
        gt = vertical(GRID, 300)
        pred = vertical(GRID, 305, score=0.9)  # LineIoU 0.5 at half width 7.5
        [pair] = make_targets([pred], [gt])
        assert pair.classical_positive
        assert pair.pair_loss == pytest.approx(0.5, abs=0.01)
        assert pair.label == -1

    def test_negative_with_low_loss_is_minus_one(self):
        gt = vertical(GRID, 300)
        preds = [vertical(GRID, 300, score=0.9), vertical(GRID, 300, score=0.89)]
        pairs = make_targets(preds, [gt], cfg=AssignerConfig(k_max=1))
        neg = [p for p in pairs if not p.classical_positive]
        assert len(neg) == 1 and neg[0].pair_loss < 0.01 and neg[0].label == -1

    def test_empty_sides(self):
        assert make_targets([], [vertical(GRID, 1)]) == []

    def test_every_pair_present_and_consistent(self):
        rng = np.random.default_rng(4)
        preds = [random_lane(rng, GRID) for _ in range(5)]
        gts = [random_lane(rng, GRID) for _ in range(2)]
        pairs = make_targets(preds, gts)
        assert len(pairs) == 10
        loss = pair_loss_matrix(preds, gts)
        for p in pairs:
            assert p.pair_loss == pytest.approx(loss[p.pred_index, p.gt_index])
            assert p.label in (-1, 1)
            assert (p.label == 1) == (p.classical_positive and p.pair_loss < 0.3)


def _pairs(n_pos, n_neg):
    mk = lambda i, lab: LabeledPair(np.zeros(6), lab, 0, i, 0.0, lab > 0, 0.1)
    return [mk(i, 1) for i in range(n_pos)] + [mk(n_pos + i, -1) for i in range(n_neg)]


class TestBalanceSample:
    def test_fill_with_negatives(self):
        s = balance_sample(_pairs(4, 100))
        labels = [p.label for p in s]
        assert len(s) == 18 and labels.count(1) == 4 and not s.short

    def test_no_positives(self):
        s = balance_sample(_pairs(0, 40))
        assert len(s) == 18 and all(p.label == -1 for p in s)

    def test_deterministic(self):
        pairs = _pairs(3, 50)
        a = [p.pred_index for p in balance_sample(pairs, rng_seed=7)]
        b = [p.pred_index for p in balance_sample(pairs, rng_seed=7)]
        c = [p.pred_index for p in balance_sample(pairs, rng_seed=8)]
        assert a == b and a != c

    def test_short(self):
        s = balance_sample(_pairs(2, 5))
        assert s.short and len(s) == 7

    def test_positive_overflow_truncated(self):
        s = balance_sample(_pairs(30, 30))
        assert len(s) == 18 and all(p.label == 1 for p in s)

    def test_empty(self):
        with pytest.raises(LaneMatchError):
            balance_sample([])


@pytest.mark.parametrize("kw", [dict(k_max=0), dict(matchnet_threshold=1.0), dict(matchnet_k_cap=0),
                                dict(pairs_per_image=1)])
def test_config_validation(kw):
    with pytest.raises(LaneMatchError):
        AssignerConfig(**kw)


def test_matchnet_assigner_teacher_student():
    records = gen_synthetic(preset("separable", n_scenes=60, seed=3))
    grid = RowGrid()
    scenes = [record_lanes(r, grid) for r in records]
    est = MatchNetAssigner(classifier=MatchNetClassifier(epochs=3, batch_size=8), random_state=0)
    samples = est.build_training_set(scenes)
    assert len(samples) == 60 and all(len(s) == 18 or s.short for s in samples)
    est.fit(scenes)
    assert est.n_samples_ == 60
    preds, gts = scenes[0]
    a = est.assign(preds, gts)
    assert a.method == "matchnet" and a.n_preds == len(preds)
    with pytest.raises(LaneMatchError):
        MatchNetAssigner().assign(preds, gts)
