import numpy as np
import pytest

from backparse.machine import BACK_STATE, Machine, NOBACK, max_actions
from backparse.oracle import oracle_action
from backparse.training import (
    REGIME_RL,
    REGIME_RL_BACKTRACK,
    ExplorationSchedule,
    build_model,
    decode,
    decode_corpus,
    schedule_defaults,
    select_action,
    train_rl,
    train_supervised,
)
from helpers import (
    alternation_corpus,
    lookahead_corpus,
    simple_sent,
    small_config,
    toy_grammar_corpus,
)

# Exploration curve anchor points (epoch, epsilon, beta).
CURVE_POINTS = [
    (1, 0.6, 0.3),
    (5, 0.28, 0.04),
    (10, 0.15, 0.0),
    (20, 0.1, 0.0),
]


class TestSchedule:
    @pytest.mark.parametrize("epoch,eps,beta", CURVE_POINTS)
    def test_anchor_points(self, epoch, eps, beta):
        e, b = schedule_defaults(epoch)
        assert e == pytest.approx(eps, abs=0.01)
        assert b == pytest.approx(beta, abs=0.01)

    def test_monotone_and_bounded(self):
        sched = ExplorationSchedule()
        values = [(sched.epsilon(t), sched.beta(t)) for t in range(1, 200)]
        for (e1, b1), (e2, b2) in zip(values, values[1:]):
            assert e2 <= e1 + 1e-12 and b2 <= b1 + 1e-12
            assert (1 - e2 - b2) >= (1 - e1 - b1) - 1e-12
        assert all(0 <= e <= 1 and 0 <= b <= 1 and e + b <= 1 for e, b in values)


class TestSelectAction:
    def setup_method(self):
        self.corpus = alternation_corpus(5, seed=3)
        self.model = build_model("tagger", self.corpus, small_config(), k=0)
        self.machine = self.model.machine
        self.s = self.corpus[0]
        c = self.machine.initial(self.s)
        self.c = self.machine.apply(c, NOBACK)

    def test_epsilon_one_is_uniform_over_legal(self):
        rng = np.random.default_rng(0)
        legal = set(self.machine.legal_actions(self.c))
        seen = {select_action(self.model, self.machine, self.c, self.s, 1.0, 0.0, rng)
                for _ in range(200)}
        assert seen == legal

    def test_beta_one_is_oracle(self):
        rng = np.random.default_rng(0)
        gold = oracle_action(self.c, self.s, self.machine)
        for _ in range(20):
            assert select_action(self.model, self.machine, self.c, self.s, 0.0, 1.0, rng) == gold

    def test_exploit_is_greedy_argmax(self):
        rng = np.random.default_rng(0)
        a = select_action(self.model, self.machine, self.c, self.s, 0.0, 0.0, rng)
        legal, q = self.model.q_legal(self.c, self.s)
        assert a == legal[int(np.argmax(q))]


class TestSupervised:
    def test_two_epochs_is_pure_static(self):
        corpus = toy_grammar_corpus(10, seed=2)
        model, hist = train_supervised(corpus, [], "tagger", small_config(epochs=2))
        assert len(hist) == 2

    def test_deterministic_across_runs(self):
        corpus = toy_grammar_corpus(12, seed=4)
        cfg = small_config(epochs=4, dropout=0.2)
        m1, h1 = train_supervised(corpus, corpus[:4], "tagparser", cfg)
        m2, h2 = train_supervised(corpus, corpus[:4], "tagparser", cfg)
        assert h1 == h2
        for name in m1.net.param_names():
            assert np.array_equal(m1.net.get_param(name), m2.net.get_param(name))

    def test_overfits_single_sentence(self):
        corpus = toy_grammar_corpus(1, seed=8)
        cfg = small_config(epochs=12, alpha=0.1, hidden=32, dropout=0.0)
        model, _ = train_supervised(corpus, corpus, "tagparser", cfg)
        res = decode(model, corpus[0])
        assert res.predicted.tags == corpus[0].tags
        assert res.predicted.heads == corpus[0].heads

    def test_rejects_fully_nonprojective_parser_corpus(self):
        corpus = [simple_sent([0, 4, 1, 2])]
        with pytest.raises(ValueError, match="projective"):
            train_supervised(corpus, [], "parser", small_config(epochs=1))

    def test_nonprojective_sentences_join_the_dynamic_phase(self):
        corpus = toy_grammar_corpus(6, seed=3) + [simple_sent([0, 4, 1, 2])]
        cfg = small_config(epochs=4, hidden=16, word_dim=8, feat_dim=4)
        model, hist = train_supervised(corpus, [], "parser", cfg)
        assert len(hist) == 4  # the non-projective sentence never crashes labelling

    def test_supervised_machine_never_backtracks(self):
        corpus = toy_grammar_corpus(8, seed=7)
        model, _ = train_supervised(corpus, [], "tagger", small_config(epochs=2))
        assert model.machine.k == 0
        for s in corpus:
            res = decode(model, s)
            assert all(e.action.kind != "back" for e in res.log)


class TestRL:
    def test_rl_regime_never_backtracks(self):
        corpus = alternation_corpus(20, seed=5)
        cfg = small_config(epochs=2, hidden=16, word_dim=8)
        model, _ = train_rl(corpus, [], "tagger", cfg, REGIME_RL)
        assert model.machine.k == 0
        for r in decode_corpus(model, corpus):
            assert all(e.action.kind != "back" for e in r.log)

    def test_rl_backtrack_validates_budget(self):
        corpus = alternation_corpus(5, seed=5)
        with pytest.raises(ValueError, match="k >= 1"):
            train_rl(corpus, [], "tagger", small_config(epochs=1, k=0), REGIME_RL_BACKTRACK)

    def test_bad_regime_rejected(self):
        with pytest.raises(ValueError, match="regime"):
            train_rl([], [], "tagger", small_config(), "sup")

    def test_deterministic_across_runs(self):
        corpus = lookahead_corpus(15, seed=1)
        cfg = small_config(epochs=3, hidden=16, word_dim=8, dropout=0.1, k=1)
        m1, h1 = train_rl(corpus, corpus[:5], "tagger", cfg, REGIME_RL_BACKTRACK)
        m2, h2 = train_rl(corpus, corpus[:5], "tagger", cfg, REGIME_RL_BACKTRACK)
        assert h1 == h2
        for name in m1.net.param_names():
            assert np.array_equal(m1.net.get_param(name), m2.net.get_param(name))


class TestDecode:
    def make_model(self, k=1):
        corpus = alternation_corpus(10, seed=6)
        return build_model("tagger", corpus, small_config(), k=k), corpus

    def test_k_zero_trace_has_no_backs(self):
        model, corpus = self.make_model(k=1)
        for s in corpus:
            res = decode(model, s, k=0)
            assert all(e.action.kind != "back" for e in res.log)

    def test_action_count_within_bound(self):
        model, corpus = self.make_model(k=1)
        for s in corpus:
            res = decode(model, s)
            assert res.n_actions <= max_actions(s.n, 1, "tagger")

    def test_decode_is_deterministic(self):
        model, corpus = self.make_model()
        a = decode(model, corpus[0])
        b = decode(model, corpus[0])
        assert a.predicted == b.predicted and a.log == b.log

    def test_predictions_cover_every_token(self):
        corpus = toy_grammar_corpus(6, seed=9)
        model = build_model("tagparser", corpus, small_config(), k=1)
        for s in corpus:
            res = decode(model, s)
            assert all(t.upos is not None for t in res.predicted.tokens)
            assert all(0 <= t.head <= s.n for t in res.predicted.tokens)


class TestWordVectors:
    def test_pretrained_rows_are_used(self, tmp_path):
        corpus = alternation_corpus(5, seed=0)
        vec_file = tmp_path / "vectors.txt"
        dim = 8
        vec_file.write_text("tok " + " ".join(["0.25"] * dim) + "\n", encoding="utf-8")
        cfg = small_config(word_dim=dim, word_vectors=str(vec_file))
        model = build_model("tagger", corpus, cfg, k=0)
        row = model.extractor.vocabs["word"].index["tok"]
        assert np.allclose(model.net.emb["word"][row], 0.25)

    def test_dim_mismatch_rejected(self, tmp_path):
        corpus = alternation_corpus(5, seed=0)
        vec_file = tmp_path / "vectors.txt"
        vec_file.write_text("tok 0.1 0.2\n", encoding="utf-8")
        cfg = small_config(word_dim=16, word_vectors=str(vec_file))
        with pytest.raises(ValueError, match="dim"):
            build_model("tagger", corpus, cfg, k=0)
