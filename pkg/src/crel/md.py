"""Concept and named-entity mention detection as BIO token classification.

A linear head over the encoder's per-token vectors predicts begin/inside/
outside labels; decoding turns maximal B-I runs into explicit mention
spans. Mentions are untyped: concept and named-entity spans share one
class, matching how the spans are evaluated. Only USER turns carry labels;
SYSTEM turns serve as context.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ckpt
from .core import Conversation, MentionSpan
from .encoder import (
    TrainableEncoder,
    encode,
    encoder_backward,
    forward_with_cache,
)
from .optim import AdamW, TrainConfig


class BIOTag(str, Enum):
    B = "B"
    I = "I"
    O = "O"


_TAG_INDEX = {BIOTag.B: 0, BIOTag.I: 1, BIOTag.O: 2}
# tie-break priority when logits are equal
_TIE_ORDER = (BIOTag.O, BIOTag.B, BIOTag.I)


@dataclass
class MDHead:
    w: np.ndarray   # [3, d], rows in (B, I, O) order
    b: np.ndarray   # [3]

    @classmethod
    def init(cls, d: int, seed: int = 0) -> "MDHead":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(d)
        return cls(rng.uniform(-scale, scale, size=(3, d)),
                   rng.uniform(-scale, scale, size=3))

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        return [("w_md", self.w), ("b_md", self.b)]


def predict_bio(rows: np.ndarray, head: MDHead) -> list[BIOTag]:
    """Per-token argmax tags; exact ties resolve O > B > I."""
    logits = rows @ head.w.T + head.b
    tags = []
    for row in logits:
        best = None
        best_v = -np.inf
        for tag in _TIE_ORDER:
            v = row[_TAG_INDEX[tag]]
            if v > best_v:
                best, best_v = tag, v
        tags.append(best)
    return tags


def decode_bio(tags: Sequence[BIOTag | str], turn_index: int = 0
               ) -> tuple[MentionSpan, ...]:
    """Decode tags into non-overlapping spans.

    Total on any tag sequence: an I with no open span (sequence start or
    after O) is repaired to B.
    """
    spans = []
    start = None
    for i, tag in enumerate(tags):
        tag = BIOTag(tag)
        if tag is BIOTag.B:
            if start is not None:
                spans.append(MentionSpan(turn_index, start, i))
            start = i
        elif tag is BIOTag.I:
            if start is None:
                start = i  # repair: treat as B
        else:
            if start is not None:
                spans.append(MentionSpan(turn_index, start, i))
                start = None
    if start is not None:
        spans.append(MentionSpan(turn_index, start, len(tags)))
    return tuple(spans)


def encode_bio(spans: Sequence[MentionSpan], n_tokens: int) -> list[BIOTag]:
    """Inverse of decode_bio for well-formed (non-overlapping) span sets."""
    tags = [BIOTag.O] * n_tokens
    for span in sorted(spans, key=lambda s: s.position()):
        if span.tok_end > n_tokens:
            raise ValueError(f"span {span.position()} exceeds {n_tokens} tokens")
        if any(tags[i] is not BIOTag.O
               for i in range(span.tok_start, span.tok_end)):
            raise ValueError(f"overlapping span {span.position()}")
        tags[span.tok_start] = BIOTag.B
        for i in range(span.tok_start + 1, span.tok_end):
            tags[i] = BIOTag.I
    return tags


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MdExample:
    conversation: Conversation
    spans_by_turn: Mapping[int, tuple[MentionSpan, ...]]  # USER turns only


@dataclass
class MdTrainResult:
    head: MDHead
    encoder: TrainableEncoder
    losses: list[float]


def md_loss_and_grads(examples: Sequence[MdExample], head: MDHead,
                      enc: TrainableEncoder, train_encoder: bool = True
                      ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean token-level cross-entropy over labeled turns, with gradients.

    Each labeled turn is scored from its own encoder pass over turns 0..t,
    matching inference.
    """
    train_encoder = train_encoder and isinstance(enc, TrainableEncoder)
    grads = {name: np.zeros_like(p) for name, p in head.param_items()}
    if train_encoder:
        for name, p in enc.param_items():
            grads[f"enc.{name}"] = np.zeros_like(p)
    loss_sum = 0.0
    n_tokens = 0
    for ex in examples:
        for t in sorted(ex.spans_by_turn):
            turn = ex.conversation.turns[t]
            if not turn.tokens:
                continue
            if isinstance(enc, TrainableEncoder):
                out, cache = forward_with_cache(ex.conversation, t, enc)
            else:
                out, cache = encode(ex.conversation, t, enc), None
            rows = out.turn_rows(t, len(turn.tokens))
            gold = encode_bio(ex.spans_by_turn[t], len(turn.tokens))
            gold_idx = np.array([_TAG_INDEX[g] for g in gold], dtype=int)
            logits = rows @ head.w.T + head.b
            logits -= logits.max(axis=1, keepdims=True)
            expl = np.exp(logits)
            probs = expl / expl.sum(axis=1, keepdims=True)
            loss_sum += -np.log(probs[np.arange(len(gold_idx)),
                                      gold_idx] + 1e-300).sum()
            n_tokens += len(gold_idx)
            dlogits = probs.copy()
            dlogits[np.arange(len(gold_idx)), gold_idx] -= 1.0
            grads["w_md"] += dlogits.T @ rows
            grads["b_md"] += dlogits.sum(axis=0)
            if train_encoder:
                d_vec = np.zeros_like(out.vectors)
                row_ids = [out.token_index_map[(t, k)]
                           for k in range(len(turn.tokens))]
                d_vec[row_ids] = dlogits @ head.w
                enc_grads = encoder_backward(d_vec, cache, enc)
                for k, v in enc_grads.items():
                    grads[f"enc.{k}"] += v
    if n_tokens == 0:
        raise ValueError("no labeled tokens in dataset")
    for k in grads:
        grads[k] /= n_tokens
    return loss_sum / n_tokens, grads


def train_md(examples: Sequence[MdExample], config: TrainConfig,
             enc: TrainableEncoder, train_encoder: bool = True
             ) -> MdTrainResult:
    """Fit the BIO head (and optionally the encoder). Zero epochs returns
    the initial parameters unchanged. With precomputed vectors only the
    head trains."""
    if not examples or all(not ex.spans_by_turn for ex in examples):
        raise ValueError("empty dataset")
    train_encoder = train_encoder and isinstance(enc, TrainableEncoder)
    head = MDHead.init(enc.config.dim, seed=config.seed)
    params = dict(head.param_items())
    if train_encoder:
        params.update({f"enc.{k}": v for k, v in enc.param_items()})
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    order = np.arange(len(examples))
    losses = []
    for _ in range(config.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for i in range(0, len(order), config.batch_size):
            batch = [examples[j] for j in order[i:i + config.batch_size]]
            loss, grads = md_loss_and_grads(batch, head, enc, train_encoder)
            opt.step(grads)
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / n_batches)
    return MdTrainResult(head, enc, losses)


def detect_mentions(conversation: Conversation, turn_index: int,
                    enc, head: MDHead) -> tuple[MentionSpan, ...]:
    """Predict and decode explicit mention spans for one turn, using an
    encoder pass over turns 0..turn_index."""
    turn = conversation.turns[turn_index]
    if not turn.tokens:
        return ()
    out = encode(conversation, turn_index, enc)
    rows = out.turn_rows(turn_index, len(turn.tokens))
    return decode_bio(predict_bio(rows, head), turn_index)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_md_head(path: str | Path, head: MDHead) -> None:
    lines = [ckpt.format_header("mdv1", d=head.w.shape[1])]
    ckpt.write_matrix(lines, "w_md", head.w)
    ckpt.write_matrix(lines, "b_md", head.b)
    ckpt.write_lines(path, lines)


def load_md_head(path: str | Path) -> MDHead:
    lines = ckpt.read_lines(path)
    fields = ckpt.parse_header(lines[0], "mdv1")
    w, pos = ckpt.read_matrix(lines, 1, "w_md")
    b, _ = ckpt.read_matrix(lines, pos, "b_md")
    if w.shape != (3, int(fields["d"])):
        raise ValueError(f"{path}: head shape {w.shape} does not match header")
    return MDHead(w, b[0])
