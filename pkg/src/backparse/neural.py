"""Configuration features and the multi-head Q-network.

Features are symbol ids drawn from small embedding spaces (words, tags,
letters, actions, plus the undo-allowed flag).  The network is a single
hidden layer with dropout and ReLU feeding one linear decision head per
task; forward and backward passes are plain numpy.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import Sentence, UNK_TAG
from .machine import (
    BACK,
    BACK_STATE,
    LEFT,
    NOBACK,
    PARSER,
    POS_STATE,
    REDUCE,
    RIGHT,
    SHIFT,
    TAGGER,
    Action,
    Configuration,
    ERASED,
    Machine,
    cell_is_value,
    tag_action,
)

# Shared unavailability symbols; every space reserves these first rows.
UNK = "<unk>"
PAD = "<pad>"
OUT_OF_BOUNDS = "<oob>"
EMPTY_STACK = "<empty-stack>"
NO_DEP_GOV = "<no-dep-gov>"
NOT_SEEN = "<not-seen>"
ERASED_SYM = "<erased>"
SPECIALS = (UNK, PAD, OUT_OF_BOUNDS, EMPTY_STACK, NO_DEP_GOV, NOT_SEEN, ERASED_SYM)

SPACES = ("word", "pos", "letter", "action", "flag")

HEAD_TAG = "tag"
HEAD_PARSE = "parse"
HEAD_BACK = "back"

PARSE_ACTIONS = (LEFT, RIGHT, REDUCE, SHIFT)
BACK_ACTIONS = (NOBACK, BACK)

WINDOW = (-2, -1, 0, 1, 2)
STACK_DEPTH = 3
HISTORY_LEN = 10
AFFIX_LEN = 4


class Vocab:
    """Symbol table; unknown symbols map to the shared UNK id."""

    def __init__(self, symbols=()):
        self.symbols = SPECIALS + tuple(symbols)
        self.index = {s: i for i, s in enumerate(self.symbols)}

    def id(self, symbol) -> int:
        return self.index.get(symbol, 0)

    def __len__(self):
        return len(self.symbols)


def tag_inventory(sentences) -> tuple[str, ...]:
    """Tag set observed in training data; UNK_TAG is always a member."""
    tags = sorted({t.upos for s in sentences for t in s.tokens} - {UNK_TAG})
    return (UNK_TAG,) + tuple(tags)


def build_vocabs(sentences, tags: tuple[str, ...]) -> dict[str, Vocab]:
    forms = sorted({t.form for s in sentences for t in s.tokens})
    letters = sorted({ch for f in forms for ch in f})
    pos_symbols = tuple(t for t in tags if t != UNK_TAG)
    actions = ["noback", "back", "left", "right", "reduce", "shift"]
    actions += [f"tag:{t}" for t in tags]
    return {
        "word": Vocab(forms),
        "pos": Vocab(pos_symbols),
        "letter": Vocab(letters),
        "action": Vocab(actions),
        "flag": Vocab(("0", "1")),
    }


def load_word_vectors(path) -> dict[str, np.ndarray]:
    """Plain-text vectors, one `word v1 .. vD` line each; a leading
    `count dim` header line is tolerated."""
    vectors = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 2 and not vectors:
                continue  # header
            if len(parts) < 3:
                continue
            vectors[parts[0]] = np.asarray(parts[1:], dtype=np.float32)
    return vectors


def slot_layout(kind: str) -> tuple[tuple[str, str], ...]:
    slots = [("pos", f"w{d:+d}.pos") for d in WINDOW]
    slots += [("word", f"w{d:+d}.form") for d in WINDOW]
    if kind != TAGGER:
        for r in range(1, STACK_DEPTH + 1):
            slots += [
                ("pos", f"s{r}.gov.pos"),
                ("pos", f"s{r}.ldep.pos"),
                ("pos", f"s{r}.rdep.pos"),
            ]
    slots += [("action", f"hist{i}") for i in range(1, HISTORY_LEN + 1)]
    slots += [("letter", f"prefix{i}") for i in range(1, AFFIX_LEN + 1)]
    slots += [("letter", f"suffix{i}") for i in range(1, AFFIX_LEN + 1)]
    slots.append(("flag", "back_allowed"))
    return tuple(slots)


class FeatureExtractor:
    """Maps a configuration to one symbol id per slot."""

    def __init__(self, kind: str, vocabs: dict[str, Vocab]):
        self.kind = kind
        self.vocabs = vocabs
        self.layout = slot_layout(kind)

    def extract(self, c: Configuration, s: Sentence, machine: Machine) -> np.ndarray:
        pos_v, word_v = self.vocabs["pos"], self.vocabs["word"]
        letter_v, action_v = self.vocabs["letter"], self.vocabs["action"]
        ids = []

        for d in WINDOW:
            ids.append(self._pos_feature(c, s, c.word_index + d, pos_v))
        for d in WINDOW:
            p = c.word_index + d
            if p < 1 or p > s.n:
                ids.append(word_v.id(OUT_OF_BOUNDS))
            elif p > c.frontier:
                ids.append(word_v.id(NOT_SEEN))
            else:
                ids.append(word_v.id(s.form(p)))

        if self.kind != TAGGER:
            for r in range(STACK_DEPTH):
                if r >= len(c.stack):
                    ids += [pos_v.id(EMPTY_STACK)] * 3
                    continue
                e = c.stack[-1 - r]
                gov = c.gov_tape[e - 1]
                if gov is ERASED:
                    ids.append(pos_v.id(ERASED_SYM))
                elif not cell_is_value(gov) or gov == 0:
                    ids.append(pos_v.id(NO_DEP_GOV))
                else:
                    ids.append(self._pos_feature(c, s, gov, pos_v))
                deps = [j + 1 for j, g in enumerate(c.gov_tape) if cell_is_value(g) and g == e]
                for pick in (min, max):
                    if deps:
                        ids.append(self._pos_feature(c, s, pick(deps), pos_v))
                    else:
                        ids.append(pos_v.id(NO_DEP_GOV))

        recent = c.log[-HISTORY_LEN:][::-1]
        for i in range(HISTORY_LEN):
            if i < len(recent):
                ids.append(action_v.id(recent[i].action.symbol))
            else:
                ids.append(action_v.id(PAD))

        if c.word_index > s.n:
            ids += [letter_v.id(OUT_OF_BOUNDS)] * (2 * AFFIX_LEN)
        else:
            form = s.form(c.word_index)
            for i in range(AFFIX_LEN):
                ids.append(letter_v.id(form[i]) if i < len(form) else letter_v.id(PAD))
            for i in range(AFFIX_LEN):
                j = len(form) - AFFIX_LEN + i
                ids.append(letter_v.id(form[j]) if j >= 0 else letter_v.id(PAD))

        ids.append(self.vocabs["flag"].id("1" if machine.back_allowed(c) else "0"))
        return np.asarray(ids, dtype=np.int64)

    def _pos_feature(self, c, s, p, pos_v) -> int:
        if p < 1 or p > s.n:
            return pos_v.id(OUT_OF_BOUNDS)
        if p > c.frontier:
            return pos_v.id(NOT_SEEN)
        if self.kind == PARSER:
            return pos_v.id(s.upos(p))
        cell = c.pos_tape[p - 1]
        if cell is ERASED:
            return pos_v.id(ERASED_SYM)
        if not cell_is_value(cell):
            return pos_v.id(NOT_SEEN)  # value still pending at or past wi
        return pos_v.id(cell)


# ----------------------------------------------------------------------
# losses


def smooth_l1(pred: float, target: float):
    """Loss and d(loss)/d(pred); quadratic inside the unit, linear outside."""
    d = float(pred) - float(target)
    if abs(d) < 1.0:
        return 0.5 * d * d, d
    return abs(d) - 0.5, (1.0 if d > 0 else -1.0)


def cross_entropy(logits: np.ndarray, gold: int):
    shifted = logits - np.max(logits)
    exps = np.exp(shifted)
    probs = exps / exps.sum()
    loss = -float(np.log(max(probs[gold], 1e-30)))
    dlogits = probs.copy()
    dlogits[gold] -= 1.0
    return loss, dlogits


def q_target(reward: float, next_qs, gamma: float) -> float:
    """Bellman target: reward plus the discounted best continuation, or the
    bare reward when the successor configuration is terminal."""
    if next_qs is None or len(next_qs) == 0:
        return float(reward)
    return float(reward) + gamma * float(np.max(next_qs))


# ----------------------------------------------------------------------
# network


class QNetwork:
    def __init__(
        self,
        layout,
        vocab_sizes: dict[str, int],
        space_dims: dict[str, int],
        hidden: int,
        heads: dict[str, int],
        dropout: float = 0.3,
        seed: int = 0,
        dtype=np.float32,
    ):
        self.layout = tuple(layout)
        self.space_dims = dict(space_dims)
        self.hidden = hidden
        self.head_sizes = dict(heads)
        self.dropout = dropout
        self.dtype = dtype
        self.input_dim = sum(self.space_dims[sp] for sp, _ in self.layout)

        rng = np.random.default_rng(seed)
        self.emb = {}
        for sp in SPACES:
            if sp not in vocab_sizes:
                continue
            self.emb[sp] = rng.normal(0.0, 0.1, (vocab_sizes[sp], self.space_dims[sp])).astype(dtype)
        lim = np.sqrt(6.0 / (self.input_dim + hidden))
        self.w1 = rng.uniform(-lim, lim, (self.input_dim, hidden)).astype(dtype)
        self.b1 = np.zeros(hidden, dtype=dtype)
        self.heads = {}
        for name in sorted(heads):
            out = heads[name]
            lim = np.sqrt(6.0 / (hidden + out))
            self.heads[name] = [
                rng.uniform(-lim, lim, (hidden, out)).astype(dtype),
                np.zeros(out, dtype=dtype),
            ]

        self._offsets = []
        off = 0
        for sp, _ in self.layout:
            self._offsets.append((sp, off, off + self.space_dims[sp]))
            off += self.space_dims[sp]

    # -- parameter access ------------------------------------------------

    def param_names(self):
        names = [f"emb:{sp}" for sp in SPACES if sp in self.emb]
        names += ["w1", "b1"]
        for h in sorted(self.heads):
            names += [f"head:{h}:w", f"head:{h}:b"]
        return names

    def get_param(self, name: str) -> np.ndarray:
        if name.startswith("emb:"):
            return self.emb[name[4:]]
        if name == "w1":
            return self.w1
        if name == "b1":
            return self.b1
        _, h, wb = name.split(":")
        return self.heads[h][0 if wb == "w" else 1]

    def copy_params(self):
        return {n: self.get_param(n).copy() for n in self.param_names()}

    def set_params(self, params):
        for n in self.param_names():
            np.copyto(self.get_param(n), params[n])

    # -- forward / backward ----------------------------------------------

    def forward(self, ids: np.ndarray, head: str, drop_rng=None):
        """Q-values of one head.  Dropout only fires when drop_rng is given,
        so inference is a pure function of parameters and features."""
        if len(ids) != len(self.layout):
            raise ValueError(f"{len(ids)} feature ids for {len(self.layout)} slots")
        if head not in self.heads:
            raise ValueError(f"unknown head {head!r}")
        x = np.concatenate(
            [self.emb[sp][ids[i]] for i, (sp, _) in enumerate(self.layout)]
        ).astype(self.dtype)
        p = self.dropout
        mask_in = mask_h = None
        if drop_rng is not None and p > 0:
            mask_in = (drop_rng.random(self.input_dim) >= p).astype(self.dtype) / (1.0 - p)
            x = x * mask_in
        h = x @ self.w1 + self.b1
        if drop_rng is not None and p > 0:
            mask_h = (drop_rng.random(self.hidden) >= p).astype(self.dtype) / (1.0 - p)
            h = h * mask_h
        act = np.maximum(h, 0)
        w, b = self.heads[head]
        q = act @ w + b
        cache = (ids, x, h, act, head, mask_in, mask_h)
        return q, cache

    def backward(self, cache, dq: np.ndarray):
        ids, x, h, act, head, mask_in, mask_h = cache
        w, _ = self.heads[head]
        grads = {
            f"head:{head}:w": np.outer(act, dq).astype(self.dtype),
            f"head:{head}:b": dq.astype(self.dtype),
        }
        dact = (w @ dq).astype(self.dtype)
        dh = dact * (h > 0)
        if mask_h is not None:
            dh = dh * mask_h
        grads["w1"] = np.outer(x, dh).astype(self.dtype)
        grads["b1"] = dh
        dx = (self.w1 @ dh).astype(self.dtype)
        if mask_in is not None:
            dx = dx * mask_in
        rows = []
        for i, (sp, lo, hi) in enumerate(self._offsets):
            rows.append((sp, int(ids[i]), dx[lo:hi]))
        grads["emb"] = rows
        return grads

    def apply_grads(self, grads, alpha: float, scale: float = 1.0) -> None:
        step = alpha * scale
        for name, g in grads.items():
            if name == "emb":
                for sp, row, vec in g:
                    self.emb[sp][row] -= step * vec
            else:
                self.get_param(name)[...] -= step * g


def td_update(net, ids, head, action_index, target, alpha, drop_rng=None) -> float:
    """One gradient step on the smooth-L1 temporal-difference loss."""
    if not np.isfinite(target):
        raise FloatingPointError(f"non-finite TD target {target}")
    q, cache = net.forward(ids, head, drop_rng)
    loss, dpred = smooth_l1(q[action_index], target)
    if not (np.isfinite(loss) and np.isfinite(dpred)):
        raise FloatingPointError("non-finite TD gradient")
    dq = np.zeros_like(q)
    dq[action_index] = dpred
    net.apply_grads(net.backward(cache, dq), alpha)
    return loss


def supervised_update(net, ids, head, gold_index, alpha, drop_rng=None) -> float:
    """One cross-entropy step treating the head as a classifier."""
    q, cache = net.forward(ids, head, drop_rng)
    loss, dlogits = cross_entropy(q, gold_index)
    net.apply_grads(net.backward(cache, dlogits), alpha)
    return loss


# ----------------------------------------------------------------------
# the trained bundle


def head_for_state(state: str) -> str:
    return {BACK_STATE: HEAD_BACK, POS_STATE: HEAD_TAG}.get(state, HEAD_PARSE)


def heads_for_kind(kind: str, n_tags: int) -> dict[str, int]:
    heads = {HEAD_BACK: 2}
    if kind != PARSER:
        heads[HEAD_TAG] = n_tags
    if kind != TAGGER:
        heads[HEAD_PARSE] = 4
    return heads


FORMAT_VERSION = 1


@dataclass
class Model:
    machine: Machine
    extractor: FeatureExtractor
    net: QNetwork
    gamma: float

    def head_actions(self, head: str) -> tuple[Action, ...]:
        if head == HEAD_TAG:
            return tuple(tag_action(t) for t in self.machine.tags)
        if head == HEAD_PARSE:
            return PARSE_ACTIONS
        return BACK_ACTIONS

    def action_index(self, head: str, a: Action) -> int:
        return self.head_actions(head).index(a)

    def q_legal(self, c: Configuration, s: Sentence):
        """Legal actions with their Q-values, dropout off."""
        head = head_for_state(c.state)
        ids = self.extractor.extract(c, s, self.machine)
        q, _ = self.net.forward(ids, head)
        legal = self.machine.legal_actions(c)
        order = self.head_actions(head)
        values = np.array([q[order.index(a)] for a in legal])
        return legal, values

    def greedy_action(self, c: Configuration, s: Sentence) -> Action:
        legal, values = self.q_legal(c, s)
        return legal[int(np.argmax(values))]

    # -- serialization -----------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "format": FORMAT_VERSION,
            "machine": self.machine.kind,
            "k": self.machine.k,
            "gamma": self.gamma,
            "tags": list(self.machine.tags),
            "dims": self.net.space_dims,
            "hidden": self.net.hidden,
            "dropout": self.net.dropout,
            "heads": self.net.head_sizes,
            "layout": [list(slot) for slot in self.net.layout],
            "vocabs": {
                sp: list(v.symbols[len(SPECIALS):]) for sp, v in self.extractor.vocabs.items()
            },
            "tensors": [[n, list(self.net.get_param(n).shape)] for n in self.net.param_names()],
        }
        with open(path, "wb") as f:
            f.write(json.dumps(meta, sort_keys=True).encode("utf-8"))
            f.write(b"\n")
            for name in self.net.param_names():
                f.write(np.ascontiguousarray(self.net.get_param(name), dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, "rb") as f:
            header = f.readline()
            blob = f.read()
        meta = json.loads(header.decode("utf-8"))
        if meta["format"] != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {meta['format']}")
        kind = meta["machine"]
        tags = tuple(meta["tags"])
        vocabs = {sp: Vocab(tuple(symbols)) for sp, symbols in meta["vocabs"].items()}
        extractor = FeatureExtractor(kind, vocabs)
        machine = Machine(kind=kind, k=meta["k"], tags=tags)
        net = QNetwork(
            layout=tuple(tuple(s) for s in meta["layout"]),
            vocab_sizes={sp: len(v) for sp, v in vocabs.items()},
            space_dims=meta["dims"],
            hidden=meta["hidden"],
            heads=meta["heads"],
            dropout=meta["dropout"],
        )
        off = 0
        for name, shape in meta["tensors"]:
            size = int(np.prod(shape)) * 4
            arr = np.frombuffer(blob[off : off + size], dtype="<f4").reshape(shape)
            np.copyto(net.get_param(name), arr)
            off += size
        if off != len(blob):
            raise ValueError("model payload size does not match the declared tensors")
        return cls(machine=machine, extractor=extractor, net=net, gamma=meta["gamma"])
