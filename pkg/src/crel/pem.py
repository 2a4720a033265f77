"""Rule-based detection of personal entity mentions.

A personal mention starts at a literal "my" or "our" token and extends
through the longest contiguous run of tokens that are adjectives, nouns,
proper nouns, pronouns, numbers, particles, or articles; the literal words
"of" and "in" are also allowed inside the run. Trailing "of"/"in" tokens
are trimmed, runs are capped at 10 tokens after the trigger, and detection
is greedy leftmost-longest: a trigger inside an already-emitted span starts
no new span.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .core import MentionKind, MentionSpan, Turn
from .evaluation import MetricReport, micro_prf, spans_to_items

TRIGGERS = frozenset({"my", "our"})
CONTINUE_POS = frozenset({"ADJ", "NOUN", "PROPN", "PRON", "NUM", "PART", "DET"})
CONTINUE_WORDS = frozenset({"of", "in"})
MAX_FOLLOWERS = 10


def _continues(token) -> bool:
    return token.pos in CONTINUE_POS or token.text.lower() in CONTINUE_WORDS


def detect_personal_mentions(turn: Turn, turn_index: int = 0
                             ) -> tuple[MentionSpan, ...]:
    """Detect personal mention spans in one POS-tagged turn.

    Deterministic and total; turns without a qualifying trigger yield ().
    """
    tokens = turn.tokens
    spans: list[MentionSpan] = []
    i = 0
    while i < len(tokens):
        if tokens[i].text.lower() not in TRIGGERS:
            i += 1
            continue
        j = i + 1
        while (j < len(tokens) and j - i - 1 < MAX_FOLLOWERS
               and _continues(tokens[j])):
            j += 1
        # a mention may contain of/in but not end with them
        while j > i + 1 and tokens[j - 1].text.lower() in CONTINUE_WORDS:
            j -= 1
        if j > i + 1:
            spans.append(MentionSpan(turn_index, i, j, MentionKind.PERSONAL))
            i = j
        else:
            i += 1
    return tuple(spans)


def score_pem_rules(gold: Mapping[str, Sequence[MentionSpan]],
                    pred: Mapping[str, Sequence[MentionSpan]]) -> MetricReport:
    """Micro P/R/F of detected personal mentions against gold spans."""
    def personal_only(spans):
        return spans_to_items([s for s in spans
                               if s.kind is MentionKind.PERSONAL])
    return micro_prf({k: personal_only(v) for k, v in gold.items()},
                     {k: personal_only(v) for k, v in pred.items()},
                     mode="md", matching="strong")
