"""Micro-averaged P/R/F for mention detection, entity linking, and personal
entity linking; Fleiss' kappa; gold dataset loading and statistics.

Matching between gold and predicted items is a deterministic maximum
bipartite matching (augmenting paths seeded in position order), so the TP
count equals the best achievable injective matching under the mode's match
predicate. Counts are pooled over all conversations before computing P/R/F.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    ConversationAnnotation,
    MentionSpan,
    SchemaError,
    read_annotations,
)

MODES = ("md", "el", "pel")
MATCHINGS = ("strong", "weak")

# Item shapes, one per mode:
#   md:  (turn, start, end)
#   el:  (turn, start, end, entity)
#   pel: ((turn, start, end), (turn, start, end))  personal x antecedent


@dataclass(frozen=True)
class MetricReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "MetricReport":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(tp, fp, fn, p, r, f)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1}


def _spans_match(a, b, weak: bool) -> bool:
    if not weak:
        return a == b
    return a[0] == b[0] and a[1] < b[2] and b[1] < a[2]


def item_matcher(mode: str, matching: str):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if matching not in MATCHINGS:
        raise ValueError(f"unknown matching {matching!r}")
    weak = matching == "weak"
    if mode == "md":
        return lambda g, p: _spans_match(g, p, weak)
    if mode == "el":
        return lambda g, p: g[3] == p[3] and _spans_match(g[:3], p[:3], weak)
    return lambda g, p: (_spans_match(g[0], p[0], weak)
                         and _spans_match(g[1], p[1], weak))


def _max_matching_tp(gold: Sequence, pred: Sequence, match) -> int:
    """Size of a maximum injective matching between gold and pred items."""
    gold = sorted(gold)
    pred = sorted(pred)
    owner: dict[int, int] = {}  # gold index -> pred index

    def try_assign(pi: int, seen: set[int]) -> bool:
        for gi in range(len(gold)):
            if gi in seen or not match(gold[gi], pred[pi]):
                continue
            seen.add(gi)
            if gi not in owner or try_assign(owner[gi], seen):
                owner[gi] = pi
                return True
        return False

    for pi in range(len(pred)):
        try_assign(pi, set())
    return len(owner)


def micro_prf(gold: Mapping[str, Sequence],
              pred: Mapping[str, Sequence],
              mode: str = "md",
              matching: str = "strong") -> MetricReport:
    """Pooled micro P/R/F over per-conversation item collections.

    `gold` and `pred` map conversation id to item lists (see module header
    for per-mode item shapes); the two key sets must be identical.
    """
    if set(gold) != set(pred):
        only_g = sorted(set(gold) - set(pred))
        only_p = sorted(set(pred) - set(gold))
        raise ValueError(
            f"conversation-id mismatch: gold-only={only_g} pred-only={only_p}")
    match = item_matcher(mode, matching)
    tp = fp = fn = 0
    for cid in sorted(gold):
        g, p = list(gold[cid]), list(pred[cid])
        t = _max_matching_tp(g, p, match)
        tp += t
        fp += len(p) - t
        fn += len(g) - t
    return MetricReport.from_counts(tp, fp, fn)


# ---------------------------------------------------------------------------
# Item extraction from annotation records
# ---------------------------------------------------------------------------

def md_items(ann: ConversationAnnotation) -> list[tuple]:
    return [(t.turn, l.start_tok, l.end_tok)
            for t in ann.turns for l in t.links]


def el_items(ann: ConversationAnnotation) -> list[tuple]:
    return [(t.turn, l.start_tok, l.end_tok, l.entity)
            for t in ann.turns for l in t.links]


def pel_items(ann: ConversationAnnotation,
              include_nid: bool = False) -> list[tuple]:
    """One item per (personal mention, antecedent) pair.

    Personal mentions with no antecedent ("not in dialogue" gold) are
    excluded unless `include_nid`, in which case they appear with a NID
    sentinel that only ever matches another NID item.
    """
    items = []
    for t in ann.turns:
        for p in t.personal:
            pspan = (t.turn, p.start_tok, p.end_tok)
            if p.antecedents:
                for a in p.antecedents:
                    items.append((pspan, (a.turn, a.start_tok, a.end_tok)))
            elif include_nid:
                items.append((pspan, (-1, 0, 1)))
    return items


def extract_items(annotations: Sequence[ConversationAnnotation], mode: str,
                  include_nid: bool = False) -> dict[str, list[tuple]]:
    if mode == "md":
        return {a.id: md_items(a) for a in annotations}
    if mode == "el":
        return {a.id: el_items(a) for a in annotations}
    if mode == "pel":
        return {a.id: pel_items(a, include_nid) for a in annotations}
    raise ValueError(f"unknown mode {mode!r}")


def spans_to_items(spans: Sequence[MentionSpan]) -> list[tuple]:
    return [(s.turn_index, s.tok_start, s.tok_end) for s in spans]


# ---------------------------------------------------------------------------
# Fleiss' kappa
# ---------------------------------------------------------------------------

def fleiss_kappa(ratings: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa over a subjects x categories count matrix.

    Rater counts may differ between subjects: per-subject agreement is
    normalised by n_i * (n_i - 1). Every subject needs at least two ratings.
    Returns exactly 1.0 when expected agreement is 1 (all ratings in a
    single category, which forces perfect agreement).
    """
    rows = [list(r) for r in ratings]
    if not rows:
        raise ValueError("empty ratings matrix")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"row {i} has {len(row)} columns, expected {width}")
        if any((not isinstance(v, int)) or v < 0 for v in row):
            raise ValueError(f"row {i} must contain non-negative integers")
        if sum(row) < 2:
            raise ValueError(f"subject {i} has fewer than 2 ratings")
    per_subject = []
    for row in rows:
        n = sum(row)
        per_subject.append((sum(v * v for v in row) - n) / (n * (n - 1)))
    p_bar = sum(per_subject) / len(rows)
    total = sum(sum(row) for row in rows)
    col_props = [sum(row[j] for row in rows) / total for j in range(width)]
    p_exp = sum(p * p for p in col_props)
    if 1.0 - p_exp == 0.0:
        return 1.0
    return (p_bar - p_exp) / (1.0 - p_exp)


# ---------------------------------------------------------------------------
# Dataset loading and statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitCounts:
    conversations: int = 0
    user_utterances: int = 0
    links: int = 0
    personal: int = 0

    def as_dict(self) -> dict:
        return {"conversations": self.conversations,
                "user_utterances": self.user_utterances,
                "links": self.links, "personal": self.personal}


@dataclass(frozen=True)
class DatasetStats:
    splits: Mapping[str, SplitCounts]
    total: SplitCounts

    def as_dict(self) -> dict:
        out = {k: v.as_dict() for k, v in sorted(self.splits.items())}
        out["total"] = self.total.as_dict()
        return out


def compute_stats(annotations: Sequence[ConversationAnnotation]) -> DatasetStats:
    buckets: dict[str, list[int]] = {}
    total = [0, 0, 0, 0]

    def bump(acc: list[int], ann: ConversationAnnotation) -> None:
        acc[0] += 1
        acc[1] += len(ann.turns)
        acc[2] += sum(len(t.links) for t in ann.turns)
        acc[3] += sum(len(t.personal) for t in ann.turns)

    for ann in annotations:
        bump(total, ann)
        if ann.split is not None:
            bump(buckets.setdefault(ann.split, [0, 0, 0, 0]), ann)
    return DatasetStats(
        splits={k: SplitCounts(*v) for k, v in buckets.items()},
        total=SplitCounts(*total))


def load_dataset(path: str | Path
                 ) -> tuple[tuple[ConversationAnnotation, ...], DatasetStats]:
    """Load a gold annotation file and report per-split statistics."""
    annotations = read_annotations(path)
    seen: set[str] = set()
    for a in annotations:
        if a.id in seen:
            raise SchemaError(f"{path}: duplicate conversation id {a.id!r}")
        seen.add(a.id)
    return annotations, compute_stats(annotations)
