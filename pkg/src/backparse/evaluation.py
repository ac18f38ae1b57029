"""Scoring, significance testing and undo-behaviour statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .machine import Machine
from .oracle import dynamic_oracle


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    upos_accuracy: float
    uas: float
    n_tokens: int
    n_sentences: int


def _check_aligned(pred, gold):
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    for i, (p, g) in enumerate(zip(pred, gold)):
        if p.n != g.n:
            raise AlignmentError(f"sentence {i}: {p.n} tokens vs {g.n} gold")
        if p.forms != g.forms:
            raise AlignmentError(f"sentence {i}: token forms differ from gold")


def score(pred, gold) -> Metrics:
    """Exact-match UPOS accuracy and unlabeled attachment score."""
    _check_aligned(pred, gold)
    tokens = tag_hits = head_hits = 0
    for p, g in zip(pred, gold):
        for tp, tg in zip(p.tokens, g.tokens):
            tokens += 1
            tag_hits += tp.upos == tg.upos
            head_hits += tp.head == tg.head
    if tokens == 0:
        raise AlignmentError("empty corpus")
    return Metrics(
        upos_accuracy=tag_hits / tokens,
        uas=head_hits / tokens,
        n_tokens=tokens,
        n_sentences=len(gold),
    )


def _per_sentence_hits(pred, gold, metric):
    hits, totals = [], []
    for p, g in zip(pred, gold):
        if metric == "upos":
            hits.append(sum(tp.upos == tg.upos for tp, tg in zip(p.tokens, g.tokens)))
        else:
            hits.append(sum(tp.head == tg.head for tp, tg in zip(p.tokens, g.tokens)))
        totals.append(g.n)
    return np.array(hits, dtype=np.float64), np.array(totals, dtype=np.float64)


def paired_bootstrap(pred_a, pred_b, gold, metric="uas", resamples=10000, seed=0) -> float:
    """Fraction of sentence-level resamples where system B scores at least
    as well as system A; small values mean A is reliably better."""
    _check_aligned(pred_a, gold)
    _check_aligned(pred_b, gold)
    hits_a, totals = _per_sentence_hits(pred_a, gold, metric)
    hits_b, _ = _per_sentence_hits(pred_b, gold, metric)
    n = len(gold)
    rng = np.random.default_rng(seed)
    wins = 0
    for _ in range(resamples):
        idx = rng.integers(0, n, size=n)
        t = totals[idx].sum()
        if t == 0:
            continue
        if hits_b[idx].sum() / t >= hits_a[idx].sum() / t:
            wins += 1
    return wins / resamples


# ----------------------------------------------------------------------
# undo-behaviour bookkeeping


@dataclass(frozen=True)
class BackStats:
    n_actions: int
    n_errors: int          # erroneous task actions
    n_error_words: int     # word-processing spans containing an error
    n_backs: int
    b_prec: float          # undo decisions that followed an error
    b_rec: float           # erroneous spans that some undo revisited
    cc: float
    ee: float
    ce: float
    ec: float
    degenerate: bool = False  # no undo events observed; ratios reported as 0


def back_stats(machine: Machine, results, gold_sentences) -> BackStats:
    """Classify every undo event by the correctness of the span it erased
    and of the span re-predicted for the same word afterwards."""
    if len(results) != len(gold_sentences):
        raise AlignmentError("results and gold sentences differ in number")
    n_actions = n_errors = n_backs = 0
    spans_total = spans_err = spans_err_undone = 0
    cc = ee = ce = ec = 0

    for res, gold in zip(results, gold_sentences):
        if not hasattr(res, "log"):
            raise ValueError("trace lacks an action history")
        events = _sentence_events(machine, res, gold)
        n_actions += events["n_actions"]
        n_errors += events["n_errors"]
        n_backs += len(events["backs"])
        spans_total += events["spans_total"]
        spans_err += events["spans_err"]
        spans_err_undone += events["spans_err_undone"]
        for before_err, after_err in events["backs"]:
            if before_err and after_err:
                ee += 1
            elif before_err and not after_err:
                ec += 1
            elif not before_err and after_err:
                ce += 1
            else:
                cc += 1

    if n_backs == 0:
        return BackStats(
            n_actions=n_actions,
            n_errors=n_errors,
            n_error_words=spans_err,
            n_backs=0,
            b_prec=0.0,
            b_rec=0.0,
            cc=0.0,
            ee=0.0,
            ce=0.0,
            ec=0.0,
            degenerate=True,
        )
    return BackStats(
        n_actions=n_actions,
        n_errors=n_errors,
        n_error_words=spans_err,
        n_backs=n_backs,
        b_prec=(ee + ec) / n_backs,
        b_rec=(spans_err_undone / spans_err) if spans_err else 0.0,
        cc=cc / n_backs,
        ee=ee / n_backs,
        ce=ce / n_backs,
        ec=ec / n_backs,
    )


def _sentence_events(machine: Machine, res, gold):
    """Replay one trace, scoring each task action against the gold tree and
    segmenting the history into per-word spans and the undo events on them."""
    c = machine.initial(gold)
    correct = {}          # log position -> bool, task actions only
    spans = []            # completed spans: (word, start, end, log positions)
    live_positions = []   # log positions whose effects are in force
    open_start = None
    open_word = None
    open_positions = []
    backs = []            # (undone positions tuple, word, log position of the undo)

    for pos, entry in enumerate(res.log):
        a = entry.action
        if a.kind in ("tag", "left", "right", "shift", "reduce"):
            verdict = dynamic_oracle(c, a, gold, machine)
            correct[pos] = verdict.optimal
        if a.kind == "noback" and c.word_index <= c.n:
            open_start = pos
            open_word = c.word_index
            open_positions = []
        if a.kind in ("tag", "left", "right", "shift", "reduce") and open_start is not None:
            open_positions.append(pos)
        before_wi = c.word_index
        c = machine.apply(c, a, reward=entry.reward)
        if a.kind == "back":
            undone = []
            while live_positions:
                p = live_positions.pop()
                undone.append(p)
                if res.log[p].action.kind == "noback":
                    break
            backs.append((tuple(sorted(undone)), c.word_index, pos))
            open_start = None
        else:
            live_positions.append(pos)
            if open_start is not None and c.word_index > before_wi:
                spans.append((open_word, open_start, pos, tuple(open_positions)))
                open_start = None

    span_err = {}
    for word, start, end, positions in spans:
        span_err[(start, end)] = any(not correct.get(p, True) for p in positions)

    undone_span_keys = set()
    events = []
    for undone, word, back_pos in backs:
        key = _span_key_for(undone, spans)
        before_err = any(not correct.get(p, True) for p in undone)
        after = _next_span(spans, word, back_pos)
        after_err = (
            any(not correct.get(p, True) for p in after[3]) if after is not None else False
        )
        events.append((before_err, after_err))
        if key is not None and before_err:
            undone_span_keys.add(key)

    err_spans = [k for k, v in span_err.items() if v]
    return {
        "n_actions": len(res.log),
        "n_errors": sum(1 for v in correct.values() if not v),
        "spans_total": len(spans),
        "spans_err": len(err_spans),
        "spans_err_undone": sum(1 for k in err_spans if k in undone_span_keys),
        "backs": events,
    }


def _span_key_for(undone_positions, spans):
    for word, start, end, positions in spans:
        if start in undone_positions:
            return (start, end)
    return None


def _next_span(spans, word, back_pos):
    for span in spans:
        if span[0] == word and span[1] > back_pos:
            return span
    return None


def format_metrics_table(rows) -> str:
    """Aligned plain-text table; rows are (label, dict) pairs.  Ratio-valued
    entries print as percentages; p-values keep their raw scale."""
    if not rows:
        return ""
    keys = list(rows[0][1].keys())
    header = ["system"] + keys
    lines = [header] + [
        [label] + [_fmt(k, d[k]) for k in keys] for label, d in rows
    ]
    widths = [max(len(str(r[i])) for r in lines) for i in range(len(header))]
    return "\n".join("  ".join(str(v).ljust(w) for v, w in zip(line, widths)) for line in lines)


def _fmt(key, v):
    if isinstance(v, float):
        if key.startswith("p_value"):
            return f"{v:.3f}"
        return f"{100 * v:.2f}"
    return str(v)
