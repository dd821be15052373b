import itertools
import random

import numpy as np
import pytest

from dnabwt import Config, ConfigError, WordCollection, build, naive_bwt
from dnabwt.counttree import TreeArray
from dnabwt.engine import (
    BwtBuilder,
    StartBitvector,
    next_insert_position,
    plan_iteration,
    sb_rank,
    stable_radix_step,
)
from conftest import random_collection


def test_build_single_letter_word():
    assert build(WordCollection.from_words(["A"]), Config(kappa=4, backend="memory")) == b"A$"


def test_build_two_words_matches_reference():
    c = WordCollection.from_words(["AC", "C"])
    out = build(c, Config(kappa=4, backend="memory"))
    assert out == naive_bwt(c) == b"CC$A$"


def test_build_edge_shapes():
    cases = [["A"], ["T"], ["A", "A", "A"], ["AT"], ["ACGT" * 5, "G"], ["G", "ACGT" * 5]]
    for words in cases:
        c = WordCollection.from_words(words)
        for kappa in (3, 4, 5):
            assert build(c, Config(kappa=kappa, backend="memory")) == naive_bwt(c), (words, kappa)


def test_build_deterministic_across_runs():
    c = WordCollection.from_words(["GATTACA", "TAG", "CCCCCCCCCC"])
    cfg = Config(kappa=5, backend="memory")
    assert build(c, cfg) == build(c, cfg)


def test_build_thread_count_invariance():
    rng = random.Random(41)
    for _ in range(5):
        c = random_collection(rng)
        one = build(c, Config(kappa=4, backend="external", threads=1))
        many = build(c, Config(kappa=4, backend="external", threads=8))
        assert one == many


def test_config_validation():
    with pytest.raises(ConfigError):
        Config(kappa=2)
    with pytest.raises(ConfigError):
        Config(kappa=40)
    with pytest.raises(ConfigError):
        Config(backend="tape")
    assert Config(threads=0).threads == 1


def test_sb_rank():
    sb = StartBitvector(8)
    assert sb_rank(sb, 5) == 0
    sb.bits[:] = [0, 1, 1, 0, 1, 0, 1, 0]
    assert sb_rank(sb, 7) == 4
    assert sb_rank(sb, 0) == 0


def test_sb_rank_active_words_fixture():
    # words 2 and 3 active, 7 and 8 newly started: two set bits below 7
    sb = StartBitvector(9)
    sb.set_many(np.array([2, 3, 7, 8]))
    assert sb_rank(sb, 7) == 2
    assert sb_rank(sb, 8) == 3


def test_activation_positions_fixture():
    # length layout putting words 2,3 in flight and starting 7,8 at t=6
    lengths = {0: 1, 1: 2, 2: 10, 3: 7, 4: 1, 5: 2, 6: 3, 7: 4, 8: 4}
    words = ["".join(random.Random(j).choice("ACGT") for _ in range(n))
             for j, n in sorted(lengths.items())]
    builder = BwtBuilder(WordCollection.from_words(words), Config(kappa=4, backend="memory"))
    builder._prepare_starts()
    sb = StartBitvector(9)
    positions = {}
    for t in range(7):
        new_js, new_pos = builder.activate_new_words(sb, t)
        positions.update(zip(new_js.tolist(), new_pos.tolist()))
    assert positions[7] == 2
    assert positions[8] == 3
    assert builder.alpha == 4
    builder.close()


def test_activation_at_zero_is_index_order():
    words = ["ACGTA", "CCCCC", "GGGGG", "T"]
    builder = BwtBuilder(WordCollection.from_words(words), Config(kappa=4, backend="memory"))
    builder._prepare_starts()
    sb = StartBitvector(4)
    new_js, new_pos = builder.activate_new_words(sb, 0)
    assert new_js.tolist() == [0, 1, 2]
    assert new_pos.tolist() == [0, 1, 2]
    builder.close()


def test_activation_ranks_match_popcount_oracle():
    rng = random.Random(42)
    for _ in range(20):
        m = rng.randint(1, 30)
        words = ["".join(rng.choice("ACGT") for _ in range(rng.randint(1, 15)))
                 for _ in range(m)]
        c = WordCollection.from_words(words)
        builder = BwtBuilder(c, Config(kappa=4, backend="memory"))
        builder._prepare_starts()
        sb = StartBitvector(m)
        seen = set()
        for t in range(c.max_length + 1):
            new_js, new_pos = builder.activate_new_words(sb, t)
            for j, p in zip(new_js.tolist(), new_pos.tolist()):
                seen.add(j)
                assert p == sum(1 for z in seen if z < j)
        assert len(seen) == m
        builder.close()


def test_alpha_counts_started_words_every_iteration():
    rng = random.Random(43)
    for _ in range(10):
        c = random_collection(rng)
        lengths = c.lengths
        observed = {}

        def snap(builder):
            observed[builder.t] = builder.alpha

        build(c, Config(kappa=4, backend="memory"), inspect=snap)
        for t in range(c.max_length + 1):
            expect = int(np.sum(c.max_length - lengths <= t))
            assert observed[t] == expect


def test_next_insert_position_worked_examples():
    tree = TreeArray(4)
    tree.counters[0] = [0, 3, 0, 0, 0]  # three C stored in the A tree
    # two C entries into bucket CG: ranks 0 and 1 captured during the write
    assert next_insert_position(1, 1, tree, r_c=0, rankk=0, alpha_next=4) == 3
    assert next_insert_position(1, 1, tree, r_c=0, rankk=1, alpha_next=4) == 4
    # an A inserted under an all-A context owes only the started-word offset
    assert next_insert_position(0, 0, tree, r_c=0, rankk=0, alpha_next=5) == 5


def test_next_insert_position_terminator_is_final():
    tree = TreeArray(4)
    with pytest.raises(ValueError):
        next_insert_position(0, 4, tree, r_c=0, rankk=0, alpha_next=1)


def test_next_insert_position_alpha_term_follows_inserted_symbol():
    # inserting A from a non-A tree still owes alpha_next; inserting a
    # non-A symbol from the A tree does not
    tree = TreeArray(4)
    tree.counters[0] = [2, 0, 1, 0, 0]
    assert next_insert_position(1, 0, tree, r_c=1, rankk=1, alpha_next=6) == 2 + 1 + 1 + 6
    assert next_insert_position(0, 2, tree, r_c=0, rankk=2, alpha_next=6) == 2


def test_plan_iteration_groups():
    uniq, bounds = plan_iteration(np.array([6, 6], dtype=np.int64))
    assert uniq.tolist() == [6]
    assert bounds.tolist() == [0, 2]
    uniq, bounds = plan_iteration(np.zeros(5, dtype=np.int64))
    assert uniq.tolist() == [0]
    assert bounds.tolist() == [0, 5]


def test_plan_iteration_matches_groupby_oracle():
    rng = random.Random(44)
    for _ in range(30):
        ords = np.sort(
            np.array([rng.randrange(16) for _ in range(rng.randint(1, 40))], dtype=np.int64)
        )
        uniq, bounds = plan_iteration(ords)
        expected = [(k, len(list(g))) for k, g in itertools.groupby(ords.tolist())]
        assert uniq.tolist() == [k for k, _ in expected]
        assert np.diff(bounds).tolist() == [n for _, n in expected]


def test_stable_radix_step_singleton():
    syms = np.array([2], dtype=np.uint8)
    (j,) = stable_radix_step(syms, np.array([5]))
    assert j.tolist() == [5]


def test_stable_radix_step_active_word_fixture():
    # started words 7 and 8 precede the in-flight words 2 and 3 (context CG);
    # partitioning on the symbols just inserted yields the next round's order
    j = np.array([7, 8, 2, 3])
    syms = np.array([2, 0, 1, 1], dtype=np.uint8)  # G, A, C, C
    (j2,) = stable_radix_step(syms, j)
    assert j2.tolist() == [8, 2, 3, 7]


def test_stable_radix_step_drops_finished_words():
    from dnabwt.collection import DOLLAR

    syms = np.array([DOLLAR, DOLLAR], dtype=np.uint8)
    (j2,) = stable_radix_step(syms, np.array([0, 1]))
    assert j2.tolist() == []


def test_stable_radix_step_matches_comparison_sort():
    rng = random.Random(45)
    for _ in range(20):
        n = 100
        syms = np.array([rng.randrange(4) for _ in range(n)], dtype=np.uint8)
        # per symbol group, draw (context, position) pairs and hand them out
        # in sorted order, mirroring the monotonicity of real states
        ctx, pos = np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64)
        for c in range(4):
            idx = np.flatnonzero(syms == c)
            pairs = sorted(
                (c * 16 + rng.randrange(16), rng.randrange(1000)) for _ in idx
            )
            for i, (cv, pv) in zip(idx, pairs):
                ctx[i], pos[i] = cv, pv
        got_ctx, got_pos = stable_radix_step(syms, ctx, pos)
        expected = sorted(zip(ctx.tolist(), pos.tolist()))
        assert list(zip(got_ctx.tolist(), got_pos.tolist())) == expected


def test_active_list_sorted_by_context_then_position_every_iteration():
    rng = random.Random(48)
    for _ in range(10):
        c = random_collection(rng)
        kappa = rng.choice([3, 4, 5])
        drop = 2 * (((kappa + 1) // 2)) - kappa

        def check(builder):
            _, pos, ctx = builder.active_state
            assert np.all(np.diff(ctx) >= 0)
            # tree-relative positions strictly increase within each tree
            tree_of = (ctx >> drop) >> (kappa - 2)
            for x in range(4):
                p = pos[tree_of == x]
                assert np.all(np.diff(p) > 0)

        build(c, Config(kappa=kappa, backend="memory"), inspect=check)


def test_half_level_and_full_level_builds_agree():
    rng = random.Random(47)
    for _ in range(15):
        c = random_collection(rng)
        five = build(c, Config(kappa=5, backend="memory"))
        six = build(c, Config(kappa=6, backend="memory"))
        assert five == six == naive_bwt(c)


def test_build_output_length_and_terminators():
    rng = random.Random(46)
    for _ in range(10):
        c = random_collection(rng)
        out = build(c, Config(kappa=5, backend="memory"))
        assert len(out) == c.total_length
        assert out.count(b"$") == c.m


def test_kappa_warning_on_oversized_tree():
    c = WordCollection.from_words(["ACGT"])
    with pytest.warns(RuntimeWarning, match="kappa=8"):
        BwtBuilder(c, Config(kappa=8, backend="memory")).close()


def test_build_highly_diverse_lengths():
    # the core use case: word lengths spanning three orders of magnitude
    rng = random.Random(49)
    long_word = "".join(rng.choice("ACGT") for _ in range(3000))
    words = [long_word]
    for _ in range(40):
        words.append("".join(rng.choice("ACGT") for _ in range(rng.randint(1, 12))))
    rng.shuffle(words)
    c = WordCollection.from_words(words)
    expected = naive_bwt(c)
    for kappa in (3, 5, 8):
        assert build(c, Config(kappa=kappa, backend="memory")) == expected
    assert build(c, Config(kappa=5, backend="external", threads=2)) == expected


def test_build_heavy_tailed_length_mix():
    rng = random.Random(54)
    pool = [1, 1, 2, 3, 4, 7, 12, 40, 90, 250]
    for _ in range(8):
        words = ["".join(rng.choice("ACGT") for _ in range(rng.choice(pool)))
                 for _ in range(rng.randint(2, 14))]
        c = WordCollection.from_words(words)
        expected = naive_bwt(c)
        for kappa in (3, 6, 9):
            assert build(c, Config(kappa=kappa, backend="memory")) == expected


def test_build_every_iteration_activates_a_word():
    rng = random.Random(55)
    lengths = list(range(1, 16))
    rng.shuffle(lengths)
    words = ["".join(rng.choice("ACGT") for _ in range(n)) for n in lengths]
    c = WordCollection.from_words(words)
    expected = naive_bwt(c)
    for kappa in (3, 4, 5, 10, 11):
        assert build(c, Config(kappa=kappa, backend="memory")) == expected


def test_build_single_letter_words_fill_terminator_only_buckets():
    # length-1 words: every terminator lands in a bucket its word never
    # wrote a base into
    c = WordCollection.from_words(["A", "C", "G", "T", "C"])
    assert build(c, Config(kappa=4, backend="memory")) == naive_bwt(c)


def test_build_identical_words_diverse_counts():
    for words in (["ACG"] * 7, ["A"] * 9, ["TTTT", "TTTT", "TT"]):
        c = WordCollection.from_words(words)
        assert build(c, Config(kappa=5, backend="memory")) == naive_bwt(c)


def test_build_external_byte_mode_store():
    from dnabwt.buckets import ExternalBucketStore

    rng = random.Random(51)
    c = random_collection(rng)
    cfg = Config(kappa=4, backend="external")
    with BwtBuilder(c, cfg) as builder:
        builder.store.close()
        builder.store = ExternalBucketStore(4, builder._own_tmp, packed=False)
        out = builder.run()
    assert out == naive_bwt(c)


def test_build_with_tiny_stream_buffer():
    rng = random.Random(52)
    c = random_collection(rng, max_m=10, max_len=60)
    out = build(c, Config(kappa=4, backend="external", buffer_bytes=1))
    assert out == naive_bwt(c)


def test_flip_parity_matches_merge_counts_after_build():
    rng = random.Random(53)
    c = random_collection(rng)
    with BwtBuilder(c, Config(kappa=4, backend="external", threads=1)) as builder:
        builder.run()
        store = builder.store
        for o in range(store.n):
            flips = int(store.merge_counts[o]) - (1 if o in store._dollars else 0)
            assert int(store.active[o]) == flips % 2
