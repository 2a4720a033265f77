"""Per-token context vectors over a conversation prefix.

Two interchangeable providers:

* ``TrainableEncoder``: token embedding + sinusoidal position signal, mixed
  by a stack of width-3 bidirectional tanh layers. Small enough to train at
  desk scale, with exact hand-written gradients.
* ``PrecomputedVectors``: rows read from a text file keyed by
  (conversation id, turn, token), for importing vectors produced by any
  external model.

Context covers turns 0..upto_turn. When the token budget is exceeded, whole
turns are dropped oldest-first; the current turn is never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import ckpt
from .core import Conversation

UNK_INDEX = 0

TRAINABLE_LITE = "trainable_lite"
PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class EncoderConfig:
    mode: str = TRAINABLE_LITE
    dim: int = 64
    n_layers: int = 1
    max_context_tokens: int = 4096

    def __post_init__(self):
        if self.mode not in (TRAINABLE_LITE, PRECOMPUTED):
            raise ValueError(f"unknown encoder mode {self.mode!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.max_context_tokens < 1:
            raise ValueError("max_context_tokens must be >= 1")


@dataclass
class EncoderOutput:
    vectors: np.ndarray                      # [n_tokens, dim]
    token_index_map: dict[tuple[int, int], int]  # (turn, token) -> row

    def covers(self, turn_index: int, token_index: int) -> bool:
        return (turn_index, token_index) in self.token_index_map

    def row(self, turn_index: int, token_index: int) -> np.ndarray:
        return self.vectors[self.token_index_map[(turn_index, token_index)]]

    def turn_rows(self, turn_index: int, n_tokens: int) -> np.ndarray:
        idx = [self.token_index_map[(turn_index, k)] for k in range(n_tokens)]
        return self.vectors[idx]


def build_vocab(conversations: Iterable[Conversation]) -> dict[str, int]:
    """Token-text vocabulary; index 0 is reserved for unknown tokens."""
    words = sorted({tok.text for conv in conversations
                    for turn in conv.turns for tok in turn.tokens})
    return {w: i + 1 for i, w in enumerate(words)}


def position_signal(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)[:, None]
    j = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (j // 2) / dim)
    sig = np.empty((n, dim), dtype=np.float64)
    sig[:, 0::2] = np.sin(angle[:, 0::2])
    sig[:, 1::2] = np.cos(angle[:, 1::2])
    return sig


@dataclass
class LayerWeights:
    w_self: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray
    bias: np.ndarray


@dataclass
class TrainableEncoder:
    config: EncoderConfig
    vocab: dict[str, int]
    embeddings: np.ndarray          # [vocab_size + 1, dim], row 0 = UNK
    layers: list[LayerWeights]

    @classmethod
    def init(cls, config: EncoderConfig, vocab: dict[str, int],
             seed: int = 0) -> "TrainableEncoder":
        rng = np.random.default_rng(seed)
        d = config.dim
        scale = 1.0 / np.sqrt(d)

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        layers = [LayerWeights(u(d, d), u(d, d), u(d, d), u(d))
                  for _ in range(config.n_layers)]
        return cls(config, dict(vocab), u(len(vocab) + 1, d), layers)

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        items = [("emb", self.embeddings)]
        for i, lw in enumerate(self.layers):
            items += [(f"layers.{i}.w_self", lw.w_self),
                      (f"layers.{i}.w_left", lw.w_left),
                      (f"layers.{i}.w_right", lw.w_right),
                      (f"layers.{i}.bias", lw.bias)]
        return items

    def token_id(self, text: str) -> int:
        return self.vocab.get(text, UNK_INDEX)


@dataclass
class PrecomputedVectors:
    dim: int
    table: dict[tuple[str, int, int], np.ndarray]
    config: EncoderConfig = field(init=False)

    def __post_init__(self):
        self.config = EncoderConfig(mode=PRECOMPUTED, dim=self.dim,
                                    n_layers=0)


def load_vectors_file(path: str | Path) -> PrecomputedVectors:
    """Parse a precomputed-vector file.

    Header line ``dim=<d>``, then one row per line:
    ``<conv_id>\\t<turn>\\t<token>\\t<f1> <f2> ... <fd>``.
    """
    lines = ckpt.read_lines(path)
    if not lines or not lines[0].startswith("dim="):
        raise ValueError(f"{path}: expected 'dim=<d>' header")
    dim = int(lines[0][4:])
    table: dict[tuple[str, int, int], np.ndarray] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{ln}: expected 4 tab-separated fields")
        cid, turn, tok, floats = parts
        vec = np.array([float(v) for v in floats.split()], dtype=np.float64)
        if vec.shape != (dim,):
            raise ValueError(f"{path}:{ln}: expected {dim} floats")
        table[(cid, int(turn), int(tok))] = vec
    return PrecomputedVectors(dim, table)


def write_vectors_file(path: str | Path, vectors: PrecomputedVectors) -> None:
    lines = [f"dim={vectors.dim}"]
    for (cid, turn, tok), vec in sorted(vectors.table.items()):
        joined = " ".join(repr(float(v)) for v in vec)
        lines.append(f"{cid}\t{turn}\t{tok}\t{joined}")
    ckpt.write_lines(path, lines)


def context_turn_indices(conversation: Conversation, upto_turn: int,
                         max_tokens: int) -> list[int]:
    """Turns kept in the context window: a suffix of 0..upto_turn."""
    if not (0 <= upto_turn < len(conversation.turns)):
        raise ValueError(f"upto_turn {upto_turn} out of range")
    lens = [len(conversation.turns[t].tokens) for t in range(upto_turn + 1)]
    if lens[upto_turn] > max_tokens:
        raise ValueError(
            f"current turn has {lens[upto_turn]} tokens, over the "
            f"{max_tokens}-token budget")
    total = sum(lens)
    first = 0
    while total > max_tokens:
        total -= lens[first]
        first += 1
    return list(range(first, upto_turn + 1))


def _shift_down(h: np.ndarray) -> np.ndarray:
    out = np.zeros_like(h)
    out[1:] = h[:-1]
    return out


def _shift_up(h: np.ndarray) -> np.ndarray:
    out = np.zeros_like(h)
    out[:-1] = h[1:]
    return out


@dataclass
class EncodeCache:
    token_ids: list[int]
    layer_inputs: list[np.ndarray]   # input H of each layer
    layer_outputs: list[np.ndarray]  # tanh output of each layer


def _forward_lite(conversation: Conversation, upto_turn: int,
                  enc: TrainableEncoder) -> tuple[EncoderOutput, EncodeCache]:
    kept = context_turn_indices(conversation, upto_turn,
                                enc.config.max_context_tokens)
    ids: list[int] = []
    index_map: dict[tuple[int, int], int] = {}
    for t in kept:
        for k, tok in enumerate(conversation.turns[t].tokens):
            index_map[(t, k)] = len(ids)
            ids.append(enc.token_id(tok.text))
    d = enc.config.dim
    h = enc.embeddings[ids].copy() if ids else np.zeros((0, d))
    h += position_signal(len(ids), d)
    cache = EncodeCache(ids, [], [])
    for lw in enc.layers:
        cache.layer_inputs.append(h)
        z = (h @ lw.w_self + _shift_down(h) @ lw.w_left
             + _shift_up(h) @ lw.w_right + lw.bias)
        h = np.tanh(z)
        cache.layer_outputs.append(h)
    return EncoderOutput(h, index_map), cache


def _lookup_precomputed(conversation: Conversation, upto_turn: int,
                        vectors: PrecomputedVectors) -> EncoderOutput:
    kept = context_turn_indices(conversation, upto_turn,
                                vectors.config.max_context_tokens)
    rows = []
    index_map: dict[tuple[int, int], int] = {}
    for t in kept:
        for k in range(len(conversation.turns[t].tokens)):
            key = (conversation.id, t, k)
            if key not in vectors.table:
                raise LookupError(f"no precomputed vector for {key}")
            index_map[(t, k)] = len(rows)
            rows.append(vectors.table[key])
    mat = np.stack(rows) if rows else np.zeros((0, vectors.dim))
    return EncoderOutput(mat, index_map)


def encode(conversation: Conversation, upto_turn: int,
           params: TrainableEncoder | PrecomputedVectors) -> EncoderOutput:
    """Encode every token of turns 0..upto_turn (after truncation).

    Pure function of (input, params); all output rows are finite.
    """
    if isinstance(params, PrecomputedVectors):
        return _lookup_precomputed(conversation, upto_turn, params)
    out, _ = _forward_lite(conversation, upto_turn, params)
    return out


def forward_with_cache(conversation: Conversation, upto_turn: int,
                       enc: TrainableEncoder
                       ) -> tuple[EncoderOutput, EncodeCache]:
    """Like encode(), but also returns the activations needed for backward."""
    return _forward_lite(conversation, upto_turn, enc)


def encoder_backward(d_vectors: np.ndarray, cache: EncodeCache,
                     params: TrainableEncoder | PrecomputedVectors
                     ) -> dict[str, np.ndarray]:
    """Gradients of a loss w.r.t. encoder parameters.

    `d_vectors` is the loss gradient w.r.t. the encoder output rows.
    """
    if isinstance(params, PrecomputedVectors):
        raise NotImplementedError(
            "precomputed vectors have no trainable parameters")
    grads = {name: np.zeros_like(p) for name, p in params.param_items()}
    dh = np.asarray(d_vectors, dtype=np.float64)
    for i in range(len(params.layers) - 1, -1, -1):
        lw = params.layers[i]
        h_in = cache.layer_inputs[i]
        h_out = cache.layer_outputs[i]
        dz = dh * (1.0 - h_out * h_out)
        grads[f"layers.{i}.w_self"] += h_in.T @ dz
        grads[f"layers.{i}.w_left"] += _shift_down(h_in).T @ dz
        grads[f"layers.{i}.w_right"] += _shift_up(h_in).T @ dz
        grads[f"layers.{i}.bias"] += dz.sum(axis=0)
        dh = (dz @ lw.w_self.T + _shift_up(dz @ lw.w_left.T)
              + _shift_down(dz @ lw.w_right.T))
    if cache.token_ids:
        np.add.at(grads["emb"], cache.token_ids, dh)
    return grads


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_encoder(path: str | Path, enc: TrainableEncoder) -> None:
    header = ckpt.format_header(
        "encv1", d=enc.config.dim, layers=enc.config.n_layers,
        max_context=enc.config.max_context_tokens, vocab=len(enc.vocab))
    lines = [header]
    for word, idx in sorted(enc.vocab.items(), key=lambda kv: kv[1]):
        lines.append(f"{word}\t{idx}")
    ckpt.write_matrix(lines, "emb", enc.embeddings)
    for i, lw in enumerate(enc.layers):
        ckpt.write_matrix(lines, f"layers.{i}.w_self", lw.w_self)
        ckpt.write_matrix(lines, f"layers.{i}.w_left", lw.w_left)
        ckpt.write_matrix(lines, f"layers.{i}.w_right", lw.w_right)
        ckpt.write_matrix(lines, f"layers.{i}.bias", lw.bias)
    ckpt.write_lines(path, lines)


def load_encoder(path: str | Path) -> TrainableEncoder:
    lines = ckpt.read_lines(path)
    fields = ckpt.parse_header(lines[0], "encv1")
    d = int(fields["d"])
    n_layers = int(fields["layers"])
    max_ctx = int(fields["max_context"])
    n_vocab = int(fields["vocab"])
    vocab: dict[str, int] = {}
    for line in lines[1:1 + n_vocab]:
        word, _, idx = line.rpartition("\t")
        vocab[word] = int(idx)
    pos = 1 + n_vocab
    emb, pos = ckpt.read_matrix(lines, pos, "emb")
    layers = []
    for i in range(n_layers):
        w_self, pos = ckpt.read_matrix(lines, pos, f"layers.{i}.w_self")
        w_left, pos = ckpt.read_matrix(lines, pos, f"layers.{i}.w_left")
        w_right, pos = ckpt.read_matrix(lines, pos, f"layers.{i}.w_right")
        bias, pos = ckpt.read_matrix(lines, pos, f"layers.{i}.bias")
        layers.append(LayerWeights(w_self, w_left, w_right, bias[0]))
    config = EncoderConfig(TRAINABLE_LITE, d, n_layers, max_ctx)
    if emb.shape != (n_vocab + 1, d):
        raise ValueError(f"{path}: embedding shape {emb.shape} does not match "
                         f"header (vocab={n_vocab}, d={d})")
    return TrainableEncoder(config, vocab, emb, layers)
