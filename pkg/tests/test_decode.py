import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from digcnn.decode import (
    ArcScoreMatrix,
    ParseTree,
    brute_force_best,
    eisner_decode,
    greedy_decode,
    is_projective,
    is_tree,
    projective_trees,
    reduce_to_arc_scores,
    tree_score,
)
from digcnn.errors import ContractViolation
from oracles import all_head_assignments, crosses, naive_argmax, reaches_root


def random_arcs(n, rng):
    a = rng.normal(size=(n, n))
    a[0] = -np.inf
    np.fill_diagonal(a, -np.inf)
    return ArcScoreMatrix(a, np.zeros((n, n), dtype=np.int64))


def exhaustive_projective_max(a, single_root=False):
    """Maximum over all head assignments that are projective trees, via the oracle helpers."""
    best = -np.inf
    for heads in all_head_assignments(a.shape[0]):
        if not reaches_root(heads) or crosses(heads):
            continue
        if single_root and np.count_nonzero(heads == 0) != 1:
            continue
        best = max(best, a[np.arange(1, a.shape[0]), heads].sum())
    return best


class TestGreedy:
    def test_forced_single_token(self):
        tree = greedy_decode(np.random.default_rng(0).normal(size=(2, 2, 1)))
        assert tree.heads.tolist() == [0]

    def test_matches_naive_argmax(self):
        rng = np.random.default_rng(1)
        for n in (2, 3, 6, 9):
            scores = rng.normal(size=(n, n, 4))
            heads, labels = naive_argmax(scores)
            tree = greedy_decode(scores)
            assert tree.heads.tolist() == heads
            assert tree.labels.tolist() == labels

    def test_returns_cycles_unchanged(self):
        scores = np.full((3, 3, 1), -5.0)
        scores[1, 2, 0] = 5.0
        scores[2, 1, 0] = 5.0
        tree = greedy_decode(scores)
        assert tree.heads.tolist() == [2, 1]
        assert not is_tree(tree)

    def test_ties_lowest_head_then_label(self):
        scores = np.zeros((3, 3, 2))
        tree = greedy_decode(scores)
        assert tree.heads.tolist() == [0, 0]
        assert tree.labels.tolist() == [0, 0]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
    def test_row_shift_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        scores = rng.normal(size=(5, 5, 3))
        shifted = scores.copy()
        shifted[3] += shift
        assert greedy_decode(scores) == greedy_decode(shifted)

    def test_maximises_each_factor(self):
        rng = np.random.default_rng(2)
        scores = rng.normal(size=(4, 4, 2))
        lp = reduce_to_arc_scores(scores)
        tree = greedy_decode(scores)
        best = tree_score(lp, tree.heads)
        for heads in all_head_assignments(4):
            assert tree_score(lp, heads) <= best + 1e-12


class TestReduce:
    def test_single_label_is_log_softmax(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=(4, 4, 1))
        arcs = reduce_to_arc_scores(scores).scores
        for d in range(1, 4):
            legal = [h for h in range(4) if h != d]
            z = scores[d, legal, 0]
            expected = z - np.log(np.exp(z).sum())
            np.testing.assert_allclose(arcs[d, legal], expected, rtol=1e-12)
            assert arcs[d, d] == -np.inf
        assert np.all(arcs[0] == -np.inf)

    def test_matches_naive_label_max(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(size=(5, 5, 3))
        reduced = reduce_to_arc_scores(scores)
        for d in range(1, 5):
            legal = [(h, l) for h in range(5) if h != d for l in range(3)]
            logz = np.log(sum(np.exp(scores[d, h, l]) for h, l in legal))
            for h in range(5):
                if h == d:
                    continue
                vals = [scores[d, h, l] - logz for l in range(3)]
                assert reduced.scores[d, h] == pytest.approx(max(vals), rel=1e-12)
                assert reduced.best_label[d, h] == int(np.argmax(vals))

    def test_monotone_in_label_score(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=(4, 4, 3))
        before = reduce_to_arc_scores(scores).scores[2, 1]
        scores[2, 1, 1] += 1.0
        assert reduce_to_arc_scores(scores).scores[2, 1] >= before


class TestEisner:
    def test_forced_two(self):
        arcs = random_arcs(2, np.random.default_rng(0))
        tree = eisner_decode(arcs)
        assert tree.heads.tolist() == [0]
        assert tree_score(arcs, tree.heads) == arcs.scores[1, 0]

    def test_dominant_chain(self):
        a = np.full((3, 3), -10.0)
        a[1, 0] = 0.0
        a[2, 1] = 0.0
        tree = eisner_decode(ArcScoreMatrix(a, np.zeros((3, 3), dtype=int)))
        assert tree.heads.tolist() == [0, 1]

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_matches_exhaustive(self, n):
        rng = np.random.default_rng(n)
        for _ in range(30):
            arcs = random_arcs(n, rng)
            tree = eisner_decode(arcs)
            assert is_projective(tree)
            assert tree_score(arcs, tree.heads) == pytest.approx(exhaustive_projective_max(arcs.scores), abs=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_single_root_matches_exhaustive(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(30):
            arcs = random_arcs(n, rng)
            tree = eisner_decode(arcs, single_root=True)
            assert is_projective(tree)
            assert np.count_nonzero(tree.heads == 0) == 1
            assert tree_score(arcs, tree.heads) == pytest.approx(exhaustive_projective_max(arcs.scores, True), abs=1e-12)

    def test_non_projective_optimum(self):
        # unconstrained best: 1->3, 2->0, 3->2 (arcs 3-1 and 2-0 cross)
        a = np.full((4, 4), -5.0)
        a[1, 3] = 0.0
        a[2, 0] = 0.0
        a[3, 2] = 0.0
        a[0] = -np.inf
        np.fill_diagonal(a, -np.inf)
        arcs = ArcScoreMatrix(a, np.zeros((4, 4), dtype=int))
        unconstrained = [1 + int(np.argmax(a[d, :])) - 1 for d in range(1, 4)]
        assert not is_projective(unconstrained)
        tree = eisner_decode(arcs)
        assert is_projective(tree)
        assert tree_score(arcs, tree.heads) < tree_score(arcs, unconstrained)
        assert tree_score(arcs, tree.heads) == pytest.approx(exhaustive_projective_max(a))

    def test_labels_from_best_label(self):
        rng = np.random.default_rng(8)
        scores = rng.normal(size=(5, 5, 4))
        reduced = reduce_to_arc_scores(scores)
        tree = eisner_decode(reduced)
        for d in range(1, 5):
            assert tree.labels[d - 1] == reduced.best_label[d, tree.heads[d - 1]]

    def test_well_formed_on_many_random(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            n = int(rng.integers(2, 15))
            tree = eisner_decode(random_arcs(n, rng))
            assert len(tree.heads) == n - 1
            assert is_tree(tree) and is_projective(tree)

    def test_brute_force_helper_agrees(self):
        arcs = random_arcs(5, np.random.default_rng(10))
        heads, score = brute_force_best(arcs)
        assert score == pytest.approx(exhaustive_projective_max(arcs.scores))
        assert tree_score(arcs, eisner_decode(arcs).heads) == pytest.approx(score)


class TestProjective:
    def test_chain(self):
        assert is_projective([0, 1, 2])

    def test_nested(self):
        assert is_projective([2, 0])

    def test_crossing(self):
        assert not is_projective([3, 0, 2])

    def test_cycle_rejected(self):
        with pytest.raises(ContractViolation):
            is_projective([2, 1])

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_enumerator_agrees_with_interval_oracle(self, n):
        mine = {tuple(h) for h in projective_trees(n)}
        oracle = {tuple(h) for h in all_head_assignments(n) if reaches_root(h) and not crosses(h)}
        assert mine == oracle

    def test_projective_tree_counts(self):
        # dummy root with any number of children: ternary numbers C(3k, k) / (2k + 1)
        assert [sum(1 for _ in projective_trees(k + 1)) for k in range(1, 6)] == [1, 3, 12, 55, 273]


def test_parse_tree_equality():
    assert ParseTree([0, 1], [2, 3]) == ParseTree(np.array([0, 1]), np.array([2, 3]))
    with pytest.raises(ContractViolation):
        ParseTree([0, 1], [2])
