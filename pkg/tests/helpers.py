"""Shared builders, synthetic corpora and independent brute-force oracles."""
from __future__ import annotations

import functools
import random

import numpy as np

from backparse.corpus import Sentence, Token, is_projective
from backparse.machine import Machine, cell_is_value
from backparse.training import ExplorationSchedule, TrainConfig


def sent(words, tags, heads) -> Sentence:
    tokens = tuple(
        Token(id=i + 1, form=w, upos=t, head=h)
        for i, (w, t, h) in enumerate(zip(words, tags, heads))
    )
    return Sentence(tokens)


def simple_sent(heads, tag="N") -> Sentence:
    n = len(heads)
    return sent([f"w{i}" for i in range(1, n + 1)], [tag] * n, heads)


def random_tree_heads(n, rng) -> list[int]:
    """Uniform-ish random tree over n nodes, rooted at 0."""
    order = list(range(1, n + 1))
    rng.shuffle(order)
    heads = [0] * (n + 1)
    heads[order[0]] = 0
    for i, node in enumerate(order[1:], start=1):
        heads[node] = order[rng.randrange(i)]
    return heads[1:]


def random_projective_heads(n, rng) -> list[int]:
    while True:
        heads = random_tree_heads(n, rng)
        if is_projective(simple_sent(heads)):
            return heads


def random_tagged_sentence(n, rng, tags=("A", "B", "C"), projective=True) -> Sentence:
    heads = random_projective_heads(n, rng) if projective else random_tree_heads(n, rng)
    words = [f"w{rng.randrange(6)}" for _ in range(n)]
    return sent(words, [rng.choice(tags) for _ in range(n)], heads)


def random_legal_walk(machine: Machine, sentence, rng, steps, back_bias=0.5):
    """Apply up to `steps` random legal actions; returns the visited configs."""
    c = machine.initial(sentence)
    visited = [c]
    for _ in range(steps):
        if c.terminal:
            break
        legal = machine.legal_actions(c)
        backs = [a for a in legal if a.kind == "back"]
        if backs and rng.random() < back_bias:
            a = backs[0]
        else:
            a = legal[rng.randrange(len(legal))]
        c = machine.apply(c, a)
        visited.append(c)
    return visited


# ----------------------------------------------------------------------
# independent oracles


def brute_projective(sentence) -> bool:
    """Projectivity via the descendant-interval property, not arc crossings."""
    n = sentence.n
    children = {i: [] for i in range(n + 1)}
    for t in sentence.tokens:
        children[t.head].append(t.id)

    def descendants(h):
        out = set()
        stack = list(children[h])
        while stack:
            x = stack.pop()
            out.add(x)
            stack.extend(children[x])
        return out

    for t in sentence.tokens:
        h, d = t.head, t.id
        lo, hi = min(h, d), max(h, d)
        inside = descendants(h) | {h}
        for between in range(lo + 1, hi):
            if between not in inside:
                return False
    return True


def brute_max_gold_arcs(config, sentence) -> int:
    """Max gold arcs any undo-free completion can end with, by exhaustive
    search over parse continuations (with end-of-sentence stack cleanup)."""
    n = sentence.n
    heads = [0] + list(sentence.heads)
    banked = 0
    govs = []
    for e in config.stack:
        cell = config.gov_tape[e - 1]
        govs.append("s" if cell_is_value(cell) else "u")
    for d in range(1, n + 1):
        cell = config.gov_tape[d - 1]
        if cell_is_value(cell) and cell == heads[d]:
            banked += 1

    @functools.cache
    def best(wi, stack, flags):
        if wi == n + 1:
            return sum(1 for e, g in zip(stack, flags) if g == "u" and heads[e] == 0)
        top_choices = []
        top_choices.append(best(wi + 1, stack + (wi,), flags + ("u",)))  # shift
        if stack:
            gained = 1 if heads[wi] == stack[-1] else 0
            top_choices.append(gained + best(wi + 1, stack + (wi,), flags + ("s",)))  # right
            if flags[-1] == "u":
                gained = 1 if heads[stack[-1]] == wi else 0
                top_choices.append(gained + best(wi, stack[:-1], flags[:-1]))  # left
            if flags[-1] == "s":
                top_choices.append(best(wi, stack[:-1], flags[:-1]))  # reduce
        return max(top_choices)

    return banked + best(config.word_index, tuple(config.stack), tuple(govs))


# ----------------------------------------------------------------------
# synthetic corpora


TOY_NOUNS = ["cat", "dog", "boat", "river", "stone"]
TOY_ADJS = ["old", "red", "slow"]
TOY_VERBS = ["sees", "rows", "lifts", "chases"]
TOY_DETS = ["the", "a"]


def toy_grammar_corpus(n_sentences, seed=0):
    """Projective DET (ADJ) NOUN VERB DET (ADJ) NOUN sentences."""
    rng = random.Random(seed)
    corpus = []
    for _ in range(n_sentences):
        words, tags, heads = [], [], []

        def noun_phrase(head_slot):
            det_i = len(words) + 1
            words.append(rng.choice(TOY_DETS)); tags.append("DET")
            if rng.random() < 0.5:
                words.append(rng.choice(TOY_ADJS)); tags.append("ADJ")
            words.append(rng.choice(TOY_NOUNS)); tags.append("NOUN")
            noun_i = len(words)
            for i in range(det_i, noun_i):
                heads.append(noun_i)
            heads.append(head_slot)
            return noun_i

        noun_phrase(None)
        verb_i = len(words) + 1
        words.append(rng.choice(TOY_VERBS)); tags.append("VERB")
        heads.append(0)
        for i, h in enumerate(heads):
            if h is None:
                heads[i] = verb_i
        noun_phrase(verb_i)
        corpus.append(sent(words, tags, heads))
    return corpus


def alternation_corpus(n_sentences, seed=0, min_len=2, max_len=8):
    """All forms identical; gold tags strictly alternate X Y X Y ..."""
    rng = random.Random(seed)
    corpus = []
    for _ in range(n_sentences):
        n = rng.randint(min_len, max_len)
        tags = [("X" if i % 2 == 0 else "Y") for i in range(n)]
        heads = _flat_heads(n)
        corpus.append(sent(["tok"] * n, tags, heads))
    return corpus


def lookahead_corpus(n_sentences, seed=0, n_pairs=3):
    """The gold tag of every odd word is decided only by the next word.

    Odd positions share one ambiguous form; the following word's form (dp
    or dq) determines whether the gold tag is TP or TQ.  Without seeing
    the next word the best policy is a coin flip on those positions.
    """
    rng = random.Random(seed)
    corpus = []
    for _ in range(n_sentences):
        words, tags = [], []
        for _ in range(n_pairs):
            kind = rng.choice(("p", "q"))
            words.append("amb")
            tags.append("TP" if kind == "p" else "TQ")
            words.append("dp" if kind == "p" else "dq")
            tags.append("DP" if kind == "p" else "DQ")
        heads = _flat_heads(len(words))
        corpus.append(sent(words, tags, heads))
    return corpus


def _flat_heads(n):
    # Word 1 is the root; everything else hangs off it (projective).
    return [0] + [1] * (n - 1)


def small_config(**overrides) -> TrainConfig:
    base = dict(
        alpha=0.05,
        gamma=0.9,
        seed=0,
        epochs=10,
        hidden=32,
        word_dim=16,
        feat_dim=8,
        dropout=0.1,
        schedule=ExplorationSchedule(),
    )
    base.update(overrides)
    return TrainConfig(**base)
