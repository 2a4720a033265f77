"""End-to-end conversational entity linking.

For each USER turn, in order: encode the history through that turn, detect
explicit mentions (BIO), detect personal mentions (rules), drop explicit
spans contained in a personal span, disambiguate the explicit mentions
against the KB, then pair each personal mention with the explicit mentions
of USER turns so far. Personal mentions are never sent to disambiguation;
their entities come only from their antecedents.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ed, md, pel, pem
from .core import (
    AntecedentRef,
    Conversation,
    ConversationAnnotation,
    LinkRecord,
    MentionSpan,
    PersonalRecord,
    Speaker,
    TurnAnnotation,
)
from .encoder import PrecomputedVectors, TrainableEncoder, encode


@dataclass
class PipelineModels:
    encoder: TrainableEncoder | PrecomputedVectors
    md_head: md.MDHead
    scorer: pel.ScorerParams
    kb: ed.KnowledgeBase
    ed_weights: ed.EDWeights
    candidates_k: int = 10
    context_window: int = ed.DEFAULT_WINDOW
    antecedents_user_only: bool = True

    def __post_init__(self):
        d = self.encoder.config.dim
        if self.md_head.w.shape[1] != d:
            raise ValueError(
                f"mention-detection head expects dim {self.md_head.w.shape[1]}, "
                f"encoder provides {d}")
        if self.scorer.d != d:
            raise ValueError(
                f"pair scorer expects dim {self.scorer.d}, encoder provides {d}")


def _decode_turn(conversation, turn_index, out, head):
    turn = conversation.turns[turn_index]
    if not turn.tokens:
        return []
    rows = out.turn_rows(turn_index, len(turn.tokens))
    return list(md.decode_bio(md.predict_bio(rows, head), turn_index))


def link(conversation: Conversation, models: PipelineModels
         ) -> ConversationAnnotation:
    """Annotate one conversation. Deterministic end to end."""
    turn_annots: list[TurnAnnotation] = []
    explicit_so_far: list[MentionSpan] = []
    entity_by_span: dict[MentionSpan, str] = {}
    scanned_system: set[int] = set()
    for t, turn in enumerate(conversation.turns):
        if turn.speaker is not Speaker.USER:
            continue
        out = encode(conversation, t, models.encoder)
        personal_spans = pem.detect_personal_mentions(turn, t)
        explicit_t = [s for s in _decode_turn(conversation, t, out,
                                              models.md_head)
                      if not any(p.contains(s) for p in personal_spans)]
        new_spans = list(explicit_t)
        if not models.antecedents_user_only:
            for s_idx in range(t):
                if (s_idx in scanned_system or not out.covers(s_idx, 0)
                        or conversation.turns[s_idx].speaker is Speaker.USER):
                    continue
                new_spans.extend(_decode_turn(conversation, s_idx, out,
                                              models.md_head))
                scanned_system.add(s_idx)
        # conversation-level coherence: re-disambiguate everything seen so
        # far, but emit only this turn's links
        links_all = ed.disambiguate(
            conversation, explicit_so_far + new_spans, models.kb,
            models.ed_weights, models.candidates_k, models.context_window)
        links_t = [l for l in links_all if l.span.turn_index == t]
        new_set = set(new_spans)
        entity_by_span.update({l.span: l.entity_id for l in links_all
                               if l.span in new_set})

        candidates = [s for s in explicit_so_far + new_spans
                      if out.covers(s.turn_index, s.tok_start)]
        plinks = pel.link_personal_mentions(
            conversation,
            [(s, pel.span_endpoints(out, s, models.scorer))
             for s in candidates],
            [(s, pel.span_endpoints(out, s, models.scorer))
             for s in personal_spans],
            models.scorer,
            entity_by_span)
        turn_annots.append(TurnAnnotation(
            turn=t,
            links=tuple(LinkRecord(l.span.tok_start, l.span.tok_end,
                                   l.entity_id, round(l.confidence, 6))
                        for l in links_t),
            personal=tuple(
                PersonalRecord(
                    p.personal.tok_start, p.personal.tok_end,
                    tuple(AntecedentRef(a.turn_index, a.tok_start, a.tok_end)
                          for a in p.antecedents),
                    p.inherited_entities)
                for p in plinks)))
        explicit_so_far.extend(new_spans)
    return ConversationAnnotation(conversation.id, tuple(turn_annots))


def link_all(conversations, models: PipelineModels
             ) -> tuple[ConversationAnnotation, ...]:
    return tuple(link(c, models) for c in conversations)


def detect_explicit_mentions(conversation: Conversation,
                             encoder_params, head: md.MDHead
                             ) -> tuple[MentionSpan, ...]:
    """Mention spans over all USER turns (no linking); used for candidate
    pooling in the annotation service."""
    spans: list[MentionSpan] = []
    for t in conversation.user_turn_indices():
        spans.extend(md.detect_mentions(conversation, t, encoder_params, head))
    return tuple(spans)
