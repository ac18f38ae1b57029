import random

import pytest

from backparse.evaluation import (
    AlignmentError,
    back_stats,
    format_metrics_table,
    paired_bootstrap,
    score,
)
from backparse.machine import BACK, Machine, NOBACK, tag_action
from backparse.training import DecodeResult
from helpers import sent, simple_sent


def annotated(s, tags=None, heads=None):
    return s.with_annotations(upos=tags, heads=heads)


class TestScore:
    def setup_method(self):
        self.gold = [
            sent(["a", "b"], ["X", "Y"], [2, 0]),
            sent(["c"], ["Z"], [0]),
        ]

    def test_perfect(self):
        m = score(self.gold, self.gold)
        assert m.upos_accuracy == 1.0 and m.uas == 1.0
        assert m.n_tokens == 3 and m.n_sentences == 2

    def test_heads_wrong_tags_right(self):
        pred = [
            annotated(self.gold[0], heads=[0, 1]),
            annotated(self.gold[1], heads=[1]),
        ]
        # one-token sentence: the only wrong head option is itself invalid,
        # so craft it via with_annotations directly
        m = score(pred, self.gold)
        assert m.upos_accuracy == 1.0 and m.uas == 0.0

    def test_misaligned_lengths(self):
        with pytest.raises(AlignmentError):
            score([self.gold[0]], self.gold)

    def test_misaligned_forms(self):
        other = [sent(["a", "z"], ["X", "Y"], [2, 0]), self.gold[1]]
        with pytest.raises(AlignmentError):
            score(other, self.gold)

    def test_permutation_invariant(self):
        pred = [annotated(self.gold[0], tags=["X", "Q"]), self.gold[1]]
        m1 = score(pred, self.gold)
        m2 = score(pred[::-1], self.gold[::-1])
        assert m1.upos_accuracy == m2.upos_accuracy and m1.uas == m2.uas


class TestPairedBootstrap:
    def make(self, n=30, seed=0):
        rng = random.Random(seed)
        gold, better, worse = [], [], []
        for _ in range(n):
            ln = rng.randint(2, 6)
            s = simple_sent([0] + [1] * (ln - 1))
            gold.append(s)
            better.append(s)  # perfect on every sentence
            worse.append(annotated(s, heads=[ln - 1 if h == 0 else 0 for h in s.heads]))
        return gold, better, worse

    def test_dominant_system(self):
        gold, better, worse = self.make()
        p = paired_bootstrap(better, worse, gold, metric="uas", resamples=2000, seed=1)
        assert p == 0.0

    def test_self_comparison_not_significant(self):
        gold, better, _ = self.make()
        p = paired_bootstrap(better, better, gold, metric="uas", resamples=2000, seed=1)
        assert p > 0.05

    def test_deterministic_given_seed(self):
        gold, better, worse = self.make()
        p1 = paired_bootstrap(better, worse, gold, resamples=500, seed=9)
        p2 = paired_bootstrap(better, worse, gold, resamples=500, seed=9)
        assert p1 == p2


def drive(machine, sentence, actions):
    c = machine.initial(sentence)
    for a in actions:
        c = machine.apply(c, a)
    return c


def as_result(machine, sentence, config):
    return DecodeResult(
        sentence=sentence,
        predicted=sentence,
        log=config.log,
        back_counts=config.back_counts,
        n_actions=len(config.log),
        machine=machine,
    )


class TestBackStats:
    def test_single_corrected_error(self):
        m = Machine("tagger", k=1, tags=("A", "B"))
        s = simple_sent([0, 1], tag="A")
        c = drive(
            m,
            s,
            [
                NOBACK, tag_action("B"),          # wrong
                BACK,                              # undo it
                NOBACK, tag_action("A"),           # corrected
                NOBACK, tag_action("A"),           # word 2, correct
            ],
        )
        stats = back_stats(m, [as_result(m, s, c)], [s])
        assert stats.n_backs == 1
        assert stats.b_prec == 1.0
        assert stats.b_rec == 1.0
        assert stats.ec == 1.0 and stats.cc == stats.ee == stats.ce == 0.0
        assert stats.n_errors == 1

    def test_back_after_correct_action_reproduced(self):
        m = Machine("tagger", k=1, tags=("A", "B"))
        s = simple_sent([0, 1], tag="A")
        c = drive(
            m,
            s,
            [
                NOBACK, tag_action("A"),           # correct
                BACK,                              # pointless undo
                NOBACK, tag_action("A"),           # same again
                NOBACK, tag_action("A"),
            ],
        )
        stats = back_stats(m, [as_result(m, s, c)], [s])
        assert stats.n_backs == 1
        assert stats.cc == 1.0
        assert stats.b_prec == 0.0
        assert stats.b_rec == 0.0  # no erroneous span existed

    def test_error_not_corrected(self):
        m = Machine("tagger", k=1, tags=("A", "B"))
        s = simple_sent([0, 1], tag="A")
        c = drive(
            m,
            s,
            [
                NOBACK, tag_action("B"),
                BACK,
                NOBACK, tag_action("B"),           # same mistake again
                NOBACK, tag_action("A"),
            ],
        )
        stats = back_stats(m, [as_result(m, s, c)], [s])
        assert stats.ee == 1.0
        assert stats.b_prec == 1.0
        # Two erroneous spans happened; only the first was revisited.
        assert stats.b_rec == 0.5
        assert stats.n_errors == 2

    def test_correct_replaced_by_error(self):
        m = Machine("tagger", k=1, tags=("A", "B"))
        s = simple_sent([0, 1], tag="A")
        c = drive(
            m,
            s,
            [
                NOBACK, tag_action("A"),
                BACK,
                NOBACK, tag_action("B"),           # ruined it
                NOBACK, tag_action("A"),
            ],
        )
        stats = back_stats(m, [as_result(m, s, c)], [s])
        assert stats.ce == 1.0 and stats.b_prec == 0.0

    def test_categories_partition(self):
        m = Machine("tagger", k=1, tags=("A", "B"))
        s = simple_sent([0, 1, 1], tag="A")
        rng = random.Random(0)
        results, golds = [], []
        for _ in range(30):
            c = m.initial(s)
            while not c.terminal:
                legal = m.legal_actions(c)
                c = m.apply(c, legal[rng.randrange(len(legal))])
            results.append(as_result(m, s, c))
            golds.append(s)
        stats = back_stats(m, results, golds)
        if stats.n_backs:
            assert stats.cc + stats.ee + stats.ce + stats.ec == pytest.approx(1.0)
        assert 0.0 <= stats.b_prec <= 1.0 and 0.0 <= stats.b_rec <= 1.0
        # corrected errors can never outnumber the errors made
        assert stats.ec * stats.n_backs <= stats.n_errors + 1e-9

    def test_no_backs_degenerate(self):
        m = Machine("tagger", k=0, tags=("A", "B"))
        s = simple_sent([0, 1], tag="A")
        c = drive(m, s, [NOBACK, tag_action("A"), NOBACK, tag_action("B")])
        stats = back_stats(m, [as_result(m, s, c)], [s])
        assert stats.degenerate and stats.n_backs == 0
        assert stats.cc == stats.ee == stats.ce == stats.ec == 0.0

    def test_misaligned_inputs(self):
        m = Machine("tagger", k=0, tags=("A",))
        with pytest.raises(AlignmentError):
            back_stats(m, [], [simple_sent([0])])


class TestTableFormat:
    def test_renders_percentages(self):
        text = format_metrics_table([("sys", {"uas": 0.8821, "tokens": 12})])
        assert "88.21" in text and "12" in text
