"""Personal entity linking: endpoint projections, bilinear pair scoring,
threshold selection, and training.

A mention is represented by the projected vectors of its first and last
token. The compatibility of an (earlier, later) mention pair is the sum of
four bilinear forms over the start/end vectors of the two mentions. At
inference a personal mention is paired with every strictly preceding
explicit mention whose score clears the threshold; multiple antecedents are
allowed, and mentions with no selected pair are dropped.

Training minimises per-pair binary cross-entropy of sigmoid(score), with
every non-gold (personal, preceding-explicit) pair in the same conversation
as a negative. The threshold is then tuned on a validation split to
maximise pair-level F1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erf as _erf

from . import ckpt
from .core import Conversation, MentionSpan, PersonalEntityLink
from .encoder import (
    EncoderOutput,
    TrainableEncoder,
    encode,
    encoder_backward,
    forward_with_cache,
)
from .optim import AdamW, TrainConfig

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: float) -> float:
    """Exact GeLU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    return 0.5 * x * (1.0 + math.erf(x / _SQRT2))


def gelu_vec(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + _erf(x / _SQRT2))


def gelu_prime(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + _erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


@dataclass
class ScorerParams:
    w_s: np.ndarray    # [h, d] start projection
    w_e: np.ndarray    # [h, d] end projection
    b_ss: np.ndarray   # [h, h]
    b_se: np.ndarray
    b_es: np.ndarray
    b_ee: np.ndarray
    tau: float = 0.0

    @property
    def h(self) -> int:
        return self.w_s.shape[0]

    @property
    def d(self) -> int:
        return self.w_s.shape[1]

    @classmethod
    def init(cls, d: int, h: int, seed: int = 0) -> "ScorerParams":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(d)

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        return cls(u(h, d), u(h, d), u(h, h), u(h, h), u(h, h), u(h, h), 0.0)

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        return [("w_s", self.w_s), ("w_e", self.w_e), ("b_ss", self.b_ss),
                ("b_se", self.b_se), ("b_es", self.b_es), ("b_ee", self.b_ee)]


@dataclass(frozen=True)
class SpanEndpoints:
    m_s: np.ndarray
    m_e: np.ndarray


def project_endpoints(v_start: np.ndarray, v_end: np.ndarray,
                      params: ScorerParams) -> SpanEndpoints:
    """Project a mention's first/last token vectors into endpoint space."""
    v_start = np.asarray(v_start, dtype=np.float64)
    v_end = np.asarray(v_end, dtype=np.float64)
    if v_start.shape != (params.d,) or v_end.shape != (params.d,):
        raise ValueError(f"expected vectors of dim {params.d}, got "
                         f"{v_start.shape} and {v_end.shape}")
    return SpanEndpoints(gelu_vec(params.w_s @ v_start),
                         gelu_vec(params.w_e @ v_end))


def span_endpoints(out: EncoderOutput, span: MentionSpan,
                   params: ScorerParams) -> SpanEndpoints:
    """Endpoints from the encoder rows of a span's first and last token."""
    v_start = out.row(span.turn_index, span.tok_start)
    v_end = out.row(span.turn_index, span.tok_end - 1)
    return project_endpoints(v_start, v_end, params)


def pair_score(before: SpanEndpoints, after: SpanEndpoints,
               params: ScorerParams) -> float:
    """Compatibility of an (earlier, later) mention pair: the sum of four
    bilinear forms over start/end endpoint vectors."""
    a, b = before.m_s, before.m_e
    c, d = after.m_s, after.m_e
    if a.shape != (params.h,) or c.shape != (params.h,):
        raise ValueError(f"endpoint dim mismatch: {a.shape} vs h={params.h}")
    return float(a @ params.b_ss @ c + a @ params.b_se @ d
                 + b @ params.b_es @ c + b @ params.b_ee @ d)


def link_personal_mentions(
    conversation: Conversation,
    explicit: Sequence[tuple[MentionSpan, SpanEndpoints]],
    personal: Sequence[tuple[MentionSpan, SpanEndpoints]],
    params: ScorerParams,
    entity_by_span: Mapping[MentionSpan, str] | None = None,
) -> tuple[PersonalEntityLink, ...]:
    """Select antecedents for each personal mention.

    Every explicit mention strictly preceding the personal mention is
    scored; all pairs with score > tau are kept. Personal mentions with no
    selected pair are omitted.
    """
    entity_by_span = entity_by_span or {}
    links = []
    for pspan, pend in sorted(personal, key=lambda x: x[0].position()):
        chosen = []
        for espan, eend in sorted(explicit, key=lambda x: x[0].position()):
            if not espan.precedes(pspan):
                continue
            if pair_score(eend, pend, params) > params.tau:
                chosen.append(espan)
        if chosen:
            inherited = sorted({entity_by_span[s] for s in chosen
                                if s in entity_by_span})
            links.append(PersonalEntityLink(pspan, tuple(chosen),
                                            tuple(inherited)))
    return tuple(links)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PelExample:
    conversation: Conversation
    personal: tuple[MentionSpan, ...]
    explicit: tuple[MentionSpan, ...]
    gold_pairs: frozenset[tuple[MentionSpan, MentionSpan]]


@dataclass
class PelTrainResult:
    scorer: ScorerParams
    encoder: TrainableEncoder
    losses: list[float]
    val_f1: float


def candidate_pairs(example: PelExample) -> list[tuple[MentionSpan, MentionSpan, int]]:
    """All (personal, preceding-explicit) pairs with 0/1 gold labels."""
    pairs = []
    for p in sorted(example.personal, key=lambda s: s.position()):
        for e in sorted(example.explicit, key=lambda s: s.position()):
            if e.precedes(p):
                label = int((p, e) in example.gold_pairs)
                pairs.append((p, e, label))
    return pairs


def _example_passes(example: PelExample) -> dict[int, list]:
    """Group candidate pairs by the personal mention's turn.

    Each group is scored from one encoder pass over turns 0..t, matching
    what the inference pipeline sees at turn t.
    """
    passes: dict[int, list] = {}
    for p, e, label in candidate_pairs(example):
        passes.setdefault(p.turn_index, []).append((p, e, label))
    return passes


def _pass_loss_grads(conversation, upto_turn, triples, scorer, enc,
                     train_encoder, grads):
    """BCE loss and gradient contributions for one encoder pass.

    Returns (loss_sum, [(personal, explicit, label, score), ...]); gradient
    sums are accumulated into `grads` (normalisation happens at the caller).
    """
    if isinstance(enc, TrainableEncoder):
        out, cache = forward_with_cache(conversation, upto_turn, enc)
    else:
        out, cache = encode(conversation, upto_turn, enc), None
        train_encoder = False
    spans = sorted({s for trip in triples for s in (trip[0], trip[1])},
                   key=lambda s: s.position())
    spans = [s for s in spans if out.covers(s.turn_index, s.tok_start)]
    index = {s: i for i, s in enumerate(spans)}
    start_rows = np.array([out.token_index_map[(s.turn_index, s.tok_start)]
                           for s in spans], dtype=int)
    end_rows = np.array([out.token_index_map[(s.turn_index, s.tok_end - 1)]
                         for s in spans], dtype=int)
    v_start = out.vectors[start_rows] if spans else np.zeros((0, scorer.d))
    v_end = out.vectors[end_rows] if spans else np.zeros((0, scorer.d))
    z_s = v_start @ scorer.w_s.T
    z_e = v_end @ scorer.w_e.T
    m_s = gelu_vec(z_s)
    m_e = gelu_vec(z_e)

    loss_sum = 0.0
    scored = []
    dm_s = np.zeros_like(m_s)
    dm_e = np.zeros_like(m_e)
    for p, e, label in triples:
        if p not in index or e not in index:
            continue
        pi, ei = index[p], index[e]
        a, b = m_s[ei], m_e[ei]      # earlier mention
        c, dd = m_s[pi], m_e[pi]     # later (personal) mention
        s = (a @ scorer.b_ss @ c + a @ scorer.b_se @ dd
             + b @ scorer.b_es @ c + b @ scorer.b_ee @ dd)
        # numerically stable BCE with logits
        loss_sum += max(s, 0.0) - s * label + math.log1p(math.exp(-abs(s)))
        g = 1.0 / (1.0 + math.exp(-s)) - label
        scored.append((p, e, label, float(s)))
        grads["b_ss"] += g * np.outer(a, c)
        grads["b_se"] += g * np.outer(a, dd)
        grads["b_es"] += g * np.outer(b, c)
        grads["b_ee"] += g * np.outer(b, dd)
        dm_s[ei] += g * (scorer.b_ss @ c + scorer.b_se @ dd)
        dm_e[ei] += g * (scorer.b_es @ c + scorer.b_ee @ dd)
        dm_s[pi] += g * (scorer.b_ss.T @ a + scorer.b_es.T @ b)
        dm_e[pi] += g * (scorer.b_se.T @ a + scorer.b_ee.T @ b)
    dz_s = dm_s * gelu_prime(z_s)
    dz_e = dm_e * gelu_prime(z_e)
    grads["w_s"] += dz_s.T @ v_start
    grads["w_e"] += dz_e.T @ v_end
    if train_encoder:
        d_vec = np.zeros_like(out.vectors)
        dv_start = dz_s @ scorer.w_s
        dv_end = dz_e @ scorer.w_e
        np.add.at(d_vec, start_rows, dv_start)
        np.add.at(d_vec, end_rows, dv_end)
        enc_grads = encoder_backward(d_vec, cache, enc)
        for k, v in enc_grads.items():
            grads[f"enc.{k}"] += v
    return loss_sum, scored


def pel_loss_and_grads(examples: Sequence[PelExample], scorer: ScorerParams,
                       enc: TrainableEncoder, train_encoder: bool = True
                       ) -> tuple[float, dict[str, np.ndarray], list]:
    """Mean BCE over all candidate pairs, with gradients for every
    scorer (and optionally encoder) parameter.

    Precomputed vectors are supported: the scorer still trains, the
    (non-existent) encoder parameters simply receive no gradients."""
    train_encoder = train_encoder and isinstance(enc, TrainableEncoder)
    grads = {name: np.zeros_like(p) for name, p in scorer.param_items()}
    if train_encoder:
        for name, p in enc.param_items():
            grads[f"enc.{name}"] = np.zeros_like(p)
    loss_sum = 0.0
    n_pairs = 0
    all_scored = []
    for ex in examples:
        for t, triples in sorted(_example_passes(ex).items()):
            ls, scored = _pass_loss_grads(ex.conversation, t, triples,
                                          scorer, enc, train_encoder, grads)
            loss_sum += ls
            n_pairs += len(scored)
            all_scored.extend(scored)
    if n_pairs == 0:
        raise ValueError("no candidate pairs in dataset")
    for k in grads:
        grads[k] /= n_pairs
    return loss_sum / n_pairs, grads, all_scored


def score_pairs(examples: Sequence[PelExample], scorer: ScorerParams,
                enc) -> list[tuple[MentionSpan, MentionSpan, int, float]]:
    """Scores and labels for every candidate pair, via inference passes."""
    scored = []
    for ex in examples:
        for t, triples in sorted(_example_passes(ex).items()):
            out = encode(ex.conversation, t, enc)
            ends = {}
            for p, e, label in triples:
                for s in (p, e):
                    if s not in ends and out.covers(s.turn_index, s.tok_start):
                        ends[s] = span_endpoints(out, s, scorer)
                if p in ends and e in ends:
                    scored.append((p, e, label,
                                   pair_score(ends[e], ends[p], scorer)))
    return scored


def pair_f1(scored: Sequence[tuple], tau: float) -> float:
    tp = sum(1 for *_, label, s in scored if label == 1 and s > tau)
    fp = sum(1 for *_, label, s in scored if label == 0 and s > tau)
    fn = sum(1 for *_, label, s in scored if label == 1 and s <= tau)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def tune_tau(scored: Sequence[tuple]) -> tuple[float, float]:
    """Pick tau maximising pair F1 over a quantile grid of the observed
    score distribution (plus one point below the minimum so selecting every
    pair stays reachable). Ties go to the larger tau."""
    scores = np.array([s for *_, s in scored], dtype=np.float64)
    grid = np.quantile(scores, np.linspace(0.0, 1.0, 101))
    candidates = np.concatenate([[scores.min() - 1.0], grid])
    best_tau, best_f1 = None, -1.0
    for tau in candidates:
        f1 = pair_f1(scored, float(tau))
        if f1 > best_f1 or (f1 == best_f1 and tau > best_tau):
            best_tau, best_f1 = float(tau), f1
    return best_tau, best_f1


def train_pel(examples: Sequence[PelExample], config: TrainConfig,
              enc: TrainableEncoder, train_encoder: bool = True,
              val_examples: Sequence[PelExample] | None = None,
              hidden: int | None = None) -> PelTrainResult:
    """Fit scorer (and optionally encoder) weights, then tune tau.

    Tau is tuned on `val_examples` when given, else on the training set.
    """
    if not examples:
        raise ValueError("empty dataset")
    all_pairs = [trip for ex in examples for trip in candidate_pairs(ex)]
    if not all_pairs:
        raise ValueError("no candidate pairs in dataset")
    if not any(label for *_, label in all_pairs):
        raise ValueError("dataset has no positive pairs")
    trainable = [ex for ex in examples if candidate_pairs(ex)]
    train_encoder = train_encoder and isinstance(enc, TrainableEncoder)
    h = hidden or max(1, enc.config.dim // 2)
    scorer = ScorerParams.init(enc.config.dim, h, seed=config.seed)
    params = dict(scorer.param_items())
    if train_encoder:
        params.update({f"enc.{k}": v for k, v in enc.param_items()})
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    order = np.arange(len(trainable))
    losses = []
    for _ in range(config.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for i in range(0, len(order), config.batch_size):
            batch = [trainable[j] for j in order[i:i + config.batch_size]]
            loss, grads, _ = pel_loss_and_grads(batch, scorer, enc,
                                                train_encoder)
            opt.step(grads)
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / n_batches)
    scored = score_pairs(val_examples or examples, scorer, enc)
    scorer.tau, val_f1 = tune_tau(scored)
    return PelTrainResult(scorer, enc, losses, val_f1)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_scorer(path: str | Path, params: ScorerParams) -> None:
    lines = [ckpt.format_header("pelv1", d=params.d, h=params.h,
                                tau=repr(params.tau))]
    for name, a in params.param_items():
        ckpt.write_matrix(lines, name, a)
    ckpt.write_lines(path, lines)


def load_scorer(path: str | Path) -> ScorerParams:
    lines = ckpt.read_lines(path)
    fields = ckpt.parse_header(lines[0], "pelv1")
    d, h = int(fields["d"]), int(fields["h"])
    tau = float(fields["tau"])
    pos = 1
    mats = {}
    for name in ("w_s", "w_e", "b_ss", "b_se", "b_es", "b_ee"):
        mats[name], pos = ckpt.read_matrix(lines, pos, name)
    params = ScorerParams(tau=tau, **mats)
    if params.d != d or params.h != h:
        raise ValueError(f"{path}: matrix shapes disagree with header")
    return params
