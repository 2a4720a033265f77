"""Builders turning (conversations, gold annotations) into training examples.

Explicit-mention gold is the union of linked spans and antecedent spans;
antecedent spans that were never linked stay NIL for disambiguation but
still count as mentions. Personal mentions with no antecedent contribute
all-negative candidate pairs.
"""

from __future__ import annotations

from typing import Sequence

from .core import (
    Conversation,
    ConversationAnnotation,
    MentionKind,
    MentionSpan,
    validate_span,
)
from .ed import EdExample
from .md import MdExample
from .pel import PelExample


def _conversation_index(conversations: Sequence[Conversation],
                        gold: Sequence[ConversationAnnotation]
                        ) -> list[tuple[Conversation, ConversationAnnotation]]:
    by_id = {c.id: c for c in conversations}
    pairs = []
    for ann in gold:
        if ann.id not in by_id:
            raise ValueError(f"gold references unknown conversation {ann.id!r}")
        pairs.append((by_id[ann.id], ann))
    return pairs


def _explicit_spans(ann: ConversationAnnotation) -> set[MentionSpan]:
    spans: set[MentionSpan] = set()
    for t in ann.turns:
        for link in t.links:
            spans.add(MentionSpan(t.turn, link.start_tok, link.end_tok))
        for p in t.personal:
            for a in p.antecedents:
                spans.add(MentionSpan(a.turn, a.start_tok, a.end_tok))
    return spans


def md_examples(conversations: Sequence[Conversation],
                gold: Sequence[ConversationAnnotation]) -> list[MdExample]:
    examples = []
    for conv, ann in _conversation_index(conversations, gold):
        labeled_turns = {t.turn for t in ann.turns}
        by_turn: dict[int, set[MentionSpan]] = {t: set() for t in labeled_turns}
        for span in _explicit_spans(ann):
            validate_span(conv, span)
            if span.turn_index in by_turn:
                by_turn[span.turn_index].add(span)
        examples.append(MdExample(conv, {
            t: tuple(sorted(spans)) for t, spans in sorted(by_turn.items())}))
    return examples


def pel_examples(conversations: Sequence[Conversation],
                 gold: Sequence[ConversationAnnotation]) -> list[PelExample]:
    examples = []
    for conv, ann in _conversation_index(conversations, gold):
        explicit = tuple(sorted(_explicit_spans(ann)))
        for span in explicit:
            validate_span(conv, span)
        personal = []
        pairs = set()
        for t in ann.turns:
            for p in t.personal:
                pspan = MentionSpan(t.turn, p.start_tok, p.end_tok,
                                    MentionKind.PERSONAL)
                validate_span(conv, pspan)
                personal.append(pspan)
                for a in p.antecedents:
                    pairs.add((pspan, MentionSpan(a.turn, a.start_tok,
                                                  a.end_tok)))
        examples.append(PelExample(conv, tuple(personal), explicit,
                                   frozenset(pairs)))
    return examples


def ed_examples(conversations: Sequence[Conversation],
                gold: Sequence[ConversationAnnotation]) -> list[EdExample]:
    examples = []
    for conv, ann in _conversation_index(conversations, gold):
        mentions = tuple(sorted(_explicit_spans(ann)))
        entity_by_span: dict[MentionSpan, str] = {}
        for t in ann.turns:
            for link in t.links:
                span = MentionSpan(t.turn, link.start_tok, link.end_tok)
                entity_by_span[span] = link.entity
        examples.append(EdExample(conv, mentions, entity_by_span))
    return examples


def split_examples(gold: Sequence[ConversationAnnotation],
                   split: str) -> list[ConversationAnnotation]:
    return [a for a in gold if a.split == split]
