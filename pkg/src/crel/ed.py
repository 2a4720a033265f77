"""Entity disambiguation over a small local knowledge base.

Candidates come from an alias table with commonness priors. Each candidate
is scored by a weighted combination of

* log-prior (floored at log 1e-6),
* local score: cosine between the mean word vector of a context window
  around the mention and the entity's vector,
* coherence: mean cosine between the entity's vector and the entities
  currently assigned to the other mentions of the conversation,

and the joint assignment is found by greedy iterated conditional
maximisation, initialised at the per-mention prior argmax and swept in
document order until fixpoint (at most 10 sweeps). Links below a NIL
threshold, or with no candidates at all, are dropped.
"""

from __future__ import annotations

import itertools
import json
import math
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import Conversation, EntityLink, MentionSpan, span_text

LOG_PRIOR_FLOOR = 1e-6
DEFAULT_WINDOW = 25
MAX_SWEEPS = 10


@dataclass(frozen=True)
class KnowledgeBase:
    alias_table: Mapping[str, tuple[tuple[str, float], ...]]
    entity_vectors: Mapping[str, np.ndarray]
    word_vectors: Mapping[str, np.ndarray]
    titles: tuple[str, ...]

    def __post_init__(self):
        for alias, entries in self.alias_table.items():
            total = 0.0
            for entity, prior in entries:
                if not (0.0 < prior <= 1.0):
                    raise ValueError(
                        f"alias {alias!r}: prior {prior} outside (0, 1]")
                total += prior
            if total > 1.0 + 1e-6:
                raise ValueError(f"alias {alias!r}: priors sum to {total}")


@dataclass(frozen=True)
class EDWeights:
    lambda_prior: float = 1.0
    lambda_local: float = 0.0
    lambda_coh: float = 0.0
    theta_nil: float = -math.inf


def normalize_mention(text: str) -> str:
    """Lowercase, strip punctuation, drop leading articles, collapse
    whitespace. "a restaurant" and "restaurant" normalise identically."""
    lowered = text.lower()
    stripped = "".join(ch for ch in lowered
                       if not unicodedata.category(ch).startswith("P"))
    words = stripped.split()
    while words and words[0] in ("a", "an", "the"):
        words = words[1:]
    return " ".join(words)


def candidates(mention_text: str, kb: KnowledgeBase, k: int
               ) -> list[tuple[str, float]]:
    """Top-k (entity, prior) candidates for a mention string, sorted by
    prior descending with lexicographic tie-break. Unknown aliases give []."""
    if k < 1:
        raise ValueError("k must be >= 1")
    entries = kb.alias_table.get(normalize_mention(mention_text), ())
    ranked = sorted(entries, key=lambda ep: (-ep[1], ep[0]))
    return list(ranked[:k])


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v) / (nu * nv)


def context_window(conversation: Conversation, span: MentionSpan,
                   window: int = DEFAULT_WINDOW) -> list[str]:
    """Lowercased non-PUNCT token texts within `window` tokens of the
    mention, crossing turn boundaries into the history (turns 0..span turn),
    excluding the mention's own tokens."""
    flat: list[tuple[int, int, str, str]] = []
    for t in range(span.turn_index + 1):
        for k, tok in enumerate(conversation.turns[t].tokens):
            flat.append((t, k, tok.text, tok.pos))
    pos_of = {(t, k): i for i, (t, k, *_ ) in enumerate(flat)}
    start = pos_of[(span.turn_index, span.tok_start)]
    stop = pos_of[(span.turn_index, span.tok_end - 1)] + 1
    picked = flat[max(0, start - window):start] + flat[stop:stop + window]
    return [text.lower() for *_, text, pos in picked if pos != "PUNCT"]


def local_score(window_words: Sequence[str], entity: str,
                kb: KnowledgeBase) -> float:
    """Cosine between the mean context word vector and the entity vector.
    Entities without a vector (or empty context) score 0."""
    evec = kb.entity_vectors.get(entity)
    if evec is None:
        return 0.0
    vecs = [kb.word_vectors[w] for w in window_words if w in kb.word_vectors]
    if not vecs:
        return 0.0
    return cosine(np.mean(vecs, axis=0), evec)


def _entity_cosine(kb: KnowledgeBase, e1: str, e2: str) -> float:
    v1 = kb.entity_vectors.get(e1)
    v2 = kb.entity_vectors.get(e2)
    if v1 is None or v2 is None:
        return 0.0
    return cosine(v1, v2)


@dataclass
class _MentionScoring:
    span: MentionSpan
    cands: list[tuple[str, float]]
    base: dict[str, float]          # lambda-weighted prior + local per entity


def _prepare(conversation: Conversation, mentions: Sequence[MentionSpan],
             kb: KnowledgeBase, weights: EDWeights, k: int,
             window: int) -> list[_MentionScoring]:
    prepared = []
    for span in sorted(mentions, key=lambda s: s.position()):
        cands_ = candidates(span_text(conversation, span), kb, k)
        words = context_window(conversation, span, window)
        base = {}
        for entity, prior in cands_:
            base[entity] = (
                weights.lambda_prior * math.log(max(prior, LOG_PRIOR_FLOOR))
                + weights.lambda_local * local_score(words, entity, kb))
        prepared.append(_MentionScoring(span, cands_, base))
    return prepared


def _coherence(kb: KnowledgeBase, entity: str, others: Sequence[str]) -> float:
    if not others:
        return 0.0
    return sum(_entity_cosine(kb, entity, o) for o in others) / len(others)


def joint_score(kb: KnowledgeBase, weights: EDWeights,
                prepared: Sequence[_MentionScoring],
                assignment: Sequence[str]) -> float:
    """Objective the greedy sweeps ascend: sum of base scores plus
    lambda_coh/(n-1) times the sum of pairwise entity cosines. With this
    scaling, re-choosing one mention's entity by its combined score exactly
    maximises the joint, so every sweep is non-decreasing."""
    total = sum(ms.base[e] for ms, e in zip(prepared, assignment))
    n = len(assignment)
    if n > 1 and weights.lambda_coh:
        pair_sum = sum(_entity_cosine(kb, assignment[i], assignment[j])
                       for i in range(n) for j in range(i + 1, n))
        total += weights.lambda_coh * pair_sum / (n - 1)
    return total


def greedy_assignment(kb: KnowledgeBase, weights: EDWeights,
                      prepared: Sequence[_MentionScoring]
                      ) -> tuple[list[str], list[float]]:
    """Iterated conditional maximisation over mentions with candidates.

    Returns the assignment and the joint score after initialisation and
    after each sweep.
    """
    assignment = [ms.cands[0][0] for ms in prepared]
    history = [joint_score(kb, weights, prepared, assignment)]
    for _ in range(MAX_SWEEPS):
        changed = False
        for i, ms in enumerate(prepared):
            others = [e for j, e in enumerate(assignment) if j != i]
            best_e = None
            best_v = -math.inf
            for entity, _prior in ms.cands:
                v = ms.base[entity]
                if weights.lambda_coh:
                    v += weights.lambda_coh * _coherence(kb, entity, others)
                if v > best_v:
                    best_e, best_v = entity, v
            if best_e != assignment[i]:
                assignment[i] = best_e
                changed = True
        history.append(joint_score(kb, weights, prepared, assignment))
        if not changed:
            break
    return assignment, history


def disambiguate(conversation: Conversation, mentions: Sequence[MentionSpan],
                 kb: KnowledgeBase, weights: EDWeights, k: int = 10,
                 window: int = DEFAULT_WINDOW) -> tuple[EntityLink, ...]:
    """Link mentions to entities; mentions with no candidates or with a
    final combined score below theta_nil are dropped (NIL). Confidence is
    the softmax probability of the chosen candidate among the mention's
    candidates at the final assignment."""
    prepared_all = _prepare(conversation, mentions, kb, weights, k, window)
    prepared = [ms for ms in prepared_all if ms.cands]
    if not prepared:
        return ()
    assignment, _ = greedy_assignment(kb, weights, prepared)
    links = []
    for i, ms in enumerate(prepared):
        others = [e for j, e in enumerate(assignment) if j != i]
        combined = {}
        for entity, _prior in ms.cands:
            v = ms.base[entity]
            if weights.lambda_coh:
                v += weights.lambda_coh * _coherence(kb, entity, others)
            combined[entity] = v
        chosen = assignment[i]
        if combined[chosen] < weights.theta_nil:
            continue
        order = [e for e, _ in ms.cands]
        vals = np.array([combined[e] for e in order])
        vals -= vals.max()
        probs = np.exp(vals)
        probs /= probs.sum()
        conf = float(probs[order.index(chosen)])
        links.append(EntityLink(ms.span, chosen, round(conf, 9)))
    return tuple(links)


def exhaustive_assignment(kb: KnowledgeBase, weights: EDWeights,
                          prepared: Sequence[_MentionScoring]
                          ) -> tuple[list[str], float]:
    """Brute-force joint maximiser over all candidate combinations; only
    viable for a handful of mentions."""
    best, best_v = None, -math.inf
    choice_lists = [[e for e, _ in ms.cands] for ms in prepared]
    for combo in itertools.product(*choice_lists):
        v = joint_score(kb, weights, prepared, list(combo))
        if v > best_v:
            best, best_v = list(combo), v
    return best, best_v


# ---------------------------------------------------------------------------
# Weight fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdExample:
    conversation: Conversation
    mentions: tuple[MentionSpan, ...]
    gold: Mapping[MentionSpan, str]   # span -> entity; absent span means NIL


_LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def _lambda_triples() -> list[tuple[float, float, float]]:
    seen = set()
    triples = []
    for lp, ll, lc in itertools.product(_LAMBDA_GRID, repeat=3):
        total = lp + ll + lc
        if total == 0.0:
            continue
        key = (round(lp / total, 6), round(ll / total, 6), round(lc / total, 6))
        if key not in seen:
            seen.add(key)
            triples.append(key)
    # prefer larger lambda_prior, then larger lambda_local, on F1 ties
    return sorted(triples, key=lambda t: (-t[0], -t[1], -t[2]))


def train_ed(examples: Sequence[EdExample], kb: KnowledgeBase, k: int = 10,
             window: int = DEFAULT_WINDOW) -> EDWeights:
    """Grid-search the combination weights and the NIL threshold to
    maximise entity-linking F1 on the given examples."""
    from .evaluation import micro_prf

    if not examples:
        raise ValueError("empty dataset")

    gold_items = {
        ex.conversation.id: [(s.turn_index, s.tok_start, s.tok_end, e)
                             for s, e in sorted(ex.gold.items())]
        for ex in examples
    }

    best = None  # (f1, lp, ll, theta, weights)
    for lp, ll, lc in _lambda_triples():
        weights = EDWeights(lp, ll, lc, theta_nil=-math.inf)
        per_conv = []
        chosen_scores = []
        for ex in examples:
            prepared = [ms for ms in _prepare(ex.conversation, ex.mentions,
                                              kb, weights, k, window)
                        if ms.cands]
            if not prepared:
                per_conv.append((ex.conversation.id, []))
                continue
            assignment, _ = greedy_assignment(kb, weights, prepared)
            scored = []
            for i, ms in enumerate(prepared):
                others = [e for j, e in enumerate(assignment) if j != i]
                v = ms.base[assignment[i]]
                if weights.lambda_coh:
                    v += weights.lambda_coh * _coherence(kb, assignment[i],
                                                         others)
                scored.append((ms.span, assignment[i], v))
                chosen_scores.append(v)
            per_conv.append((ex.conversation.id, scored))
        if not chosen_scores:
            continue
        theta_grid = [-math.inf] + [
            float(q) for q in np.quantile(np.array(chosen_scores),
                                          np.linspace(0.0, 1.0, 21))]
        for theta in theta_grid:
            pred_items = {
                cid: [(s.turn_index, s.tok_start, s.tok_end, e)
                      for s, e, v in scored if v >= theta]
                for cid, scored in per_conv
            }
            f1 = micro_prf(gold_items, pred_items, mode="el",
                           matching="strong").f1
            key = (f1, lp, ll, theta)
            if best is None or key > (best[0], best[1], best[2], best[3]):
                best = (f1, lp, ll, theta,
                        EDWeights(lp, ll, lc, theta_nil=theta))
    if best is None:
        raise ValueError("no mention has any candidate; cannot fit weights")
    return best[4]


# ---------------------------------------------------------------------------
# Title search
# ---------------------------------------------------------------------------

def search_titles(query: str, kb: KnowledgeBase, n: int) -> list[str]:
    """Rank KB titles by (exact normalized match, prefix match,
    token-overlap count, lexicographic); titles with no relation to the
    query are excluded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    qnorm = normalize_mention(query)
    qtokens = set(qnorm.split())
    ranked = []
    for title in kb.titles:
        tnorm = normalize_mention(title)
        exact = int(bool(qnorm) and tnorm == qnorm)
        prefix = int(bool(qnorm) and tnorm.startswith(qnorm))
        overlap = len(qtokens & set(tnorm.split()))
        if exact or prefix or overlap:
            ranked.append((-exact, -prefix, -overlap, title))
    ranked.sort()
    return [title for *_, title in ranked[:n]]


# ---------------------------------------------------------------------------
# KB files
# ---------------------------------------------------------------------------

def load_kb(kb_dir: str | Path) -> KnowledgeBase:
    """Load a KB directory: aliases.tsv (alias, entity, prior), optional
    entity_vecs.tsv / word_vecs.tsv (id, space-separated floats), optional
    titles.txt (one per line)."""
    kb_dir = Path(kb_dir)
    alias_path = kb_dir / "aliases.tsv"
    if not alias_path.exists():
        raise FileNotFoundError(f"missing {alias_path}")
    table: dict[str, list[tuple[str, float]]] = {}
    for ln, line in enumerate(alias_path.read_text(encoding="utf-8")
                              .splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{alias_path}:{ln}: expected 3 fields")
        alias, entity, prior = parts
        table.setdefault(normalize_mention(alias), []).append(
            (entity, float(prior)))

    def load_vecs(name: str) -> dict[str, np.ndarray]:
        path = kb_dir / name
        vecs: dict[str, np.ndarray] = {}
        if not path.exists():
            return vecs
        for ln, line in enumerate(path.read_text(encoding="utf-8")
                                  .splitlines(), start=1):
            if not line.strip():
                continue
            key, _, floats = line.partition("\t")
            vecs[key] = np.array([float(v) for v in floats.split()])
        return vecs

    titles_path = kb_dir / "titles.txt"
    titles = tuple(t for t in titles_path.read_text(encoding="utf-8")
                   .splitlines() if t.strip()) if titles_path.exists() else ()
    return KnowledgeBase(
        alias_table={a: tuple(sorted(es, key=lambda ep: (-ep[1], ep[0])))
                     for a, es in table.items()},
        entity_vectors=load_vecs("entity_vecs.tsv"),
        word_vectors=load_vecs("word_vecs.tsv"),
        titles=titles)


def save_weights(path: str | Path, weights: EDWeights) -> None:
    obj = {"lambda_prior": weights.lambda_prior,
           "lambda_local": weights.lambda_local,
           "lambda_coh": weights.lambda_coh,
           "theta_nil": (None if weights.theta_nil == -math.inf
                         else weights.theta_nil)}
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_weights(path: str | Path) -> EDWeights:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    theta = obj.get("theta_nil")
    return EDWeights(obj["lambda_prior"], obj["lambda_local"],
                     obj["lambda_coh"],
                     -math.inf if theta is None else float(theta))
