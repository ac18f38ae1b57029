"""Static and dynamic oracles for tagging and arc-eager parsing.

The static oracle turns a gold tree into one canonical action sequence
(eager attachment).  The dynamic oracle scores any legal action in any
configuration by how many gold arcs it makes unreachable, using the
arc-decomposition rules of the transition system.
"""
from __future__ import annotations

from dataclasses import dataclass

from .corpus import Sentence, is_projective
from .machine import (
    BACK_STATE,
    LEFT,
    NOBACK,
    POS_STATE,
    REDUCE,
    RIGHT,
    SHIFT,
    TAGGER,
    Action,
    Configuration,
    Machine,
    cell_is_value,
    tag_action,
)


class NonProjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class OracleVerdict:
    loss: int        # gold arcs newly rendered unbuildable (tag actions: 0/1)
    optimal: bool


def static_oracle(sentence: Sentence, machine: Machine) -> tuple[Action, ...]:
    """Gold action sequence; replaying it reproduces the gold annotation."""
    if machine.kind != TAGGER and not is_projective(sentence):
        raise NonProjectiveError("static oracle is undefined on non-projective sentences")
    actions = []
    c = machine.initial(sentence)
    while not c.terminal:
        a = _static_action(c, sentence)
        actions.append(a)
        c = machine.apply(c, a)
    return tuple(actions)


def _static_action(c: Configuration, s: Sentence) -> Action:
    if c.state == BACK_STATE:
        return NOBACK
    if c.state == POS_STATE:
        return tag_action(s.upos(c.word_index))
    wi = c.word_index
    if wi > c.n:
        return REDUCE
    if c.stack:
        top = c.stack[-1]
        if s.head(top) == wi:
            return LEFT
        if s.head(wi) == top:
            return RIGHT
        # Pop anything standing between the current word and a pending
        # gold arc further down the stack (or the root).
        below = set(c.stack[:-1])
        blocked = s.head(wi) == 0 or s.head(wi) in below
        blocked = blocked or any(s.head(j) == wi for j in below)
        if blocked:
            if not cell_is_value(c.gov_tape[top - 1]):
                raise NonProjectiveError(
                    f"gold arcs of word {wi} are unreachable; sentence is not projective"
                )
            return REDUCE
    return SHIFT


def reachable_gold_arcs(c: Configuration, s: Sentence) -> int:
    """Gold arcs already built plus those some legal continuation can build.

    A gold arc (h, d) with d unprocessed survives while h is still ahead,
    is the root, or sits on the stack.  A processed d must itself be on
    the stack, waiting for a governor that is still ahead (or the root,
    satisfied by end-of-sentence cleanup).  Continuations never undo.
    """
    wi = c.word_index
    on_stack = set(c.stack)
    count = 0
    for d in range(1, s.n + 1):
        h = s.head(d)
        cell = c.gov_tape[d - 1]
        if cell_is_value(cell):
            if cell == h:
                count += 1
            continue
        if d >= wi:
            if h == 0 or h >= wi or h in on_stack:
                count += 1
        elif d in on_stack and (h == 0 or h >= wi):
            count += 1
    return count


def dynamic_oracle(
    c: Configuration, a: Action, s: Sentence, machine: Machine
) -> OracleVerdict:
    """Score one legal action against the gold annotation."""
    if a.kind == "tag":
        ok = a.tag == s.upos(c.word_index)
        return OracleVerdict(loss=0 if ok else 1, optimal=ok)
    if a.kind == "noback":
        return OracleVerdict(loss=0, optimal=True)
    if a.kind == "back":
        # Undoing never destroys gold arcs; it is still never the oracle move.
        return OracleVerdict(loss=0, optimal=False)
    before = reachable_gold_arcs(c, s)
    after = reachable_gold_arcs(machine.apply(c, a), s)
    loss = before - after
    if loss < 0:
        raise AssertionError(f"parsing action {a} increased reachable arcs")
    return OracleVerdict(loss=loss, optimal=loss == 0)


def oracle_action(c: Configuration, s: Sentence, machine: Machine) -> Action:
    """The optimal action in c: min loss, ties broken in head order."""
    if c.state == BACK_STATE:
        return NOBACK
    if c.state == POS_STATE:
        return tag_action(s.upos(c.word_index))
    legal = machine.legal_actions(c)
    best, best_loss = None, None
    for a in legal:
        loss = dynamic_oracle(c, a, s, machine).loss
        if best_loss is None or loss < best_loss:
            best, best_loss = a, loss
    return best
