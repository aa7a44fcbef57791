import numpy as np
import pytest
from conftest import random_batch
from hypothesis import assume, given
from hypothesis import strategies as st

from avhighlight.autodiff import Graph, ParamStore, forward, gradient_check
from avhighlight.errors import ContractError, DegenerateError
from avhighlight.losses import (
    PairSet,
    build_pair_set,
    ccc,
    ccc_loss,
    margin_ranking_loss,
    siamese_score,
)
from avhighlight.model import build_model, score_batch

labels = st.lists(st.floats(0, 2, allow_nan=False), min_size=2, max_size=12)


def spread(xs):
    return len(xs) >= 2 and np.ptp(xs) > 1e-3


class TestCcc:
    def test_perfect(self):
        assert ccc([0, 1, 2], [0, 1, 2]) == 1.0
        assert ccc_loss([0, 1, 2], [0, 1, 2]) == 0.0

    def test_anti_ordered(self):
        assert ccc([0, 1, 2], [2, 1, 0], "lin_concordance") == pytest.approx(-1.0, abs=1e-15)
        assert ccc([0, 1, 2], [2, 1, 0], "eq1_literal") == pytest.approx(1.0, abs=1e-15)
        assert ccc_loss([0, 1, 2], [2, 1, 0]) == pytest.approx(2.0, abs=1e-15)
        assert ccc_loss([0, 1, 2], [2, 1, 0], "eq1_literal") == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("variant", ["lin_concordance", "eq1_literal"])
    def test_constant_sequences(self, variant):
        assert ccc([0, 0, 0], [1, 1, 1], variant) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            ccc([1, 1], [1, 1])
        assert ccc([1, 1], [1, 1], eps=1e-8) == 0.0

    def test_contract(self):
        with pytest.raises(ContractError):
            ccc([1, 2], [1, 2, 3])
        with pytest.raises(ContractError):
            ccc([1], [1])
        with pytest.raises(ContractError):
            ccc([1, 2], [1, 2], "pearson")

    @given(labels, st.data())
    def test_ranges_and_symmetry(self, y, data):
        yhat = data.draw(st.lists(st.floats(-3, 3), min_size=len(y), max_size=len(y)))
        assume(spread(y) or spread(yhat))
        lin, lit = ccc(y, yhat), ccc(y, yhat, "eq1_literal")
        assert -1 - 1e-12 <= lin <= 1 + 1e-12
        assert -1e-12 <= lit <= 1 + 1e-12
        assert lin == pytest.approx(ccc(yhat, y), abs=1e-12)
        assert lit == pytest.approx(ccc(yhat, y, "eq1_literal"), abs=1e-12)

    @given(labels, st.floats(0.1, 3), st.floats(-2, 2))
    def test_penalizes_scale_and_shift(self, y, a, b):
        assume(spread(y) and (abs(a - 1) > 1e-3 or abs(b) > 1e-3))
        assert ccc(y, a * np.asarray(y) + b) < 1.0

    @pytest.mark.parametrize("variant", ["lin_concordance", "eq1_literal"])
    def test_node_gradient(self, variant):
        g = Graph()
        g.set_output("loss", g.add("ccc_loss", g.add("param", params=("s",)), g.input("y", (None,)), variant=variant))
        p = ParamStore()
        p.add("s", np.random.default_rng(1).standard_normal(8))
        y = np.random.default_rng(2).uniform(0, 2, 8)
        assert gradient_check(g, p, {"y": y}, 1e-5) < 1e-4
        assert float(forward(g, p, {"y": y})["loss"]) == pytest.approx(ccc_loss(y, p["s"], variant, 1e-8), rel=1e-14)


class TestPairs:
    def test_forced_pair(self):
        assert list(build_pair_set([2, 0])) == [(0, 1)]
        assert list(build_pair_set([0, 2])) == [(1, 0)]

    def test_all_ties(self):
        assert len(build_pair_set([1, 1, 1])) == 0

    def test_three_levels(self):
        assert sorted(build_pair_set([2, 1, 0], max_pairs=None)) == [(0, 1), (0, 2), (1, 2)]

    def test_within_video(self):
        pairs = build_pair_set([2, 1, 0, 1], "within_video", groups=["a", "a", "b", "b"])
        assert sorted(pairs) == [(0, 1), (3, 2)]
        with pytest.raises(ContractError):
            build_pair_set([2, 1], "within_video")

    def test_too_few(self):
        with pytest.raises(ContractError):
            build_pair_set([1.0])

    @given(st.lists(st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0]), min_size=2, max_size=30),
           st.integers(1, 20), st.integers(0, 1000))
    def test_strict_and_reproducible(self, ys, max_pairs, seed):
        a = build_pair_set(ys, max_pairs=max_pairs, seed=seed)
        b = build_pair_set(ys, max_pairs=max_pairs, seed=seed)
        assert list(a) == list(b)
        assert len(a) <= max_pairs
        assert all(ys[h] > ys[l] for h, l in a)
        full = set(build_pair_set(ys))
        assert set(a) <= full
        assert len(full) == sum(ys[i] != ys[j] for i in range(len(ys)) for j in range(i + 1, len(ys)))


class TestMargin:
    def test_examples(self):
        assert margin_ranking_loss({"h": 0.9, "l": 0.2}, [("h", "l")]) == pytest.approx(0.3, abs=1e-15)
        assert margin_ranking_loss([2.0, 0.5], [(0, 1)]) == 0.0
        assert margin_ranking_loss([0.4, 0.4, 0.4], [(0, 1), (2, 1)]) == 2.0

    def test_empty(self):
        assert margin_ranking_loss([1.0, 2.0], PairSet.empty()) == 0.0

    def test_unscored(self):
        with pytest.raises(ContractError):
            margin_ranking_loss({"a": 1.0}, [("a", "b")])

    @given(st.lists(st.integers(-8, 8), min_size=2, max_size=10), st.integers(-50, 50), st.integers(0, 10_000))
    def test_shift_invariant_exactly(self, ints, shift, seed):
        # dyadic scores keep every sum exact, so equality is exact
        scores = np.asarray(ints, dtype=float) / 4
        rng = np.random.default_rng(seed)
        pairs = [tuple(rng.choice(len(scores), 2, replace=False)) for _ in range(5)]
        assert margin_ranking_loss(scores + shift / 8, pairs) == margin_ranking_loss(scores, pairs)

    @given(st.floats(-3, 3), st.floats(0, 3))
    def test_monotone_in_gap(self, gap, more):
        a = margin_ranking_loss([gap, 0.0], [(0, 1)])
        b = margin_ranking_loss([gap + more, 0.0], [(0, 1)])
        assert b <= a
        if gap >= 1:
            assert a == 0.0

    def test_swap_with_relabel(self):
        s = [0.3, -0.2, 0.8]
        pairs = build_pair_set([2.0, 1.0, 0.0])
        swapped_scores = [s[2], s[1], s[0]]
        swapped_pairs = build_pair_set([0.0, 1.0, 2.0])
        assert margin_ranking_loss(s, pairs) == pytest.approx(margin_ranking_loss(swapped_scores, swapped_pairs))

    def test_node_matches_function(self):
        g = Graph()
        g.set_output("loss", g.add("margin_ranking_loss", g.add("param", params=("s",)),
                                   g.input("hi", (None,)), g.input("lo", (None,))))
        p = ParamStore()
        p.add("s", [0.1, 0.9, -0.4, 0.2])
        pairs = build_pair_set([1.0, 2.0, 0.0, 0.5])
        got = float(forward(g, p, {"hi": pairs.high, "lo": pairs.low})["loss"])
        assert got == pytest.approx(margin_ranking_loss(p["s"], pairs), abs=1e-15)


class TestSiamese:
    def test_same_clip_both_members(self, small_spec):
        m = build_model(small_spec)
        clip = {k: v[0] for k, v in random_batch(small_spec, 1).items()}
        f = siamese_score(m.graph, m.params, clip)
        assert margin_ranking_loss({"h": f, "l": f}, [("h", "l")]) == 1.0

    def test_matches_batch_scoring(self, small_spec):
        m = build_model(small_spec)
        feeds = random_batch(small_spec, 3, seed=8)
        batch = score_batch(m.graph, m.params, feeds)
        one = [siamese_score(m.graph, m.params, {k: v[i] for k, v in feeds.items()}) for i in range(3)]
        np.testing.assert_allclose(one, batch, rtol=1e-12)
