"""Dialogue data model: tokens, turns, conversations, mention spans, and JSON IO.

Everything here is immutable after construction, so instances can be shared
freely across threads. File IO goes through one canonical JSON form (sorted
keys, two-space indent, shortest round-trip float repr) so that
write -> read -> write is byte-stable.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

POS_TAGS = frozenset({
    "ADJ", "ADV", "NOUN", "PROPN", "PRON", "VERB",
    "NUM", "PART", "DET", "ADP", "PUNCT", "OTHER",
})

SPLITS = ("train", "val", "test")


class SchemaError(ValueError):
    """An input file does not match the expected schema."""


class Speaker(str, Enum):
    USER = "USER"
    SYSTEM = "SYSTEM"


class MentionKind(str, Enum):
    EXPLICIT = "EXPLICIT"
    PERSONAL = "PERSONAL"


@dataclass(frozen=True)
class Token:
    text: str
    pos: str
    char_start: int
    char_end: int

    def __post_init__(self):
        if not (0 <= self.char_start < self.char_end):
            raise ValueError(f"bad token offsets ({self.char_start}, {self.char_end})")
        if self.pos not in POS_TAGS:
            raise ValueError(f"unknown POS tag {self.pos!r}")


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str
    tokens: tuple[Token, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        prev_end = 0
        for i, tok in enumerate(self.tokens):
            if tok.char_end > len(self.text):
                raise ValueError(f"token {i} exceeds turn text")
            if tok.char_start < prev_end:
                raise ValueError(f"token {i} overlaps or is out of order")
            if self.text[tok.char_start:tok.char_end] != tok.text:
                raise ValueError(f"token {i} text does not match turn text slice")
            prev_end = tok.char_end


@dataclass(frozen=True)
class Conversation:
    id: str
    turns: tuple[Turn, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.id:
            raise ValueError("conversation id must be non-empty")
        if not any(t.speaker is Speaker.USER for t in self.turns):
            raise ValueError(f"conversation {self.id!r} has no USER turn")

    def user_turn_indices(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.turns) if t.speaker is Speaker.USER)


@dataclass(frozen=True, order=True)
class MentionSpan:
    turn_index: int
    tok_start: int
    tok_end: int
    kind: MentionKind = MentionKind.EXPLICIT

    def __post_init__(self):
        if self.turn_index < 0 or not (0 <= self.tok_start < self.tok_end):
            raise ValueError(
                f"bad span ({self.turn_index}, {self.tok_start}, {self.tok_end})")

    def position(self) -> tuple[int, int, int]:
        return (self.turn_index, self.tok_start, self.tok_end)

    def precedes(self, other: "MentionSpan") -> bool:
        return self.position() < other.position()

    def contains(self, other: "MentionSpan") -> bool:
        return (self.turn_index == other.turn_index
                and self.tok_start <= other.tok_start
                and other.tok_end <= self.tok_end)


def validate_span(conversation: Conversation, span: MentionSpan) -> None:
    if span.turn_index >= len(conversation.turns):
        raise ValueError(f"span turn {span.turn_index} out of range")
    n = len(conversation.turns[span.turn_index].tokens)
    if span.tok_end > n:
        raise ValueError(f"span ({span.tok_start}, {span.tok_end}) exceeds {n} tokens")


def span_text(conversation: Conversation, span: MentionSpan) -> str:
    """Surface text of a span, with original inter-token spacing."""
    turn = conversation.turns[span.turn_index]
    toks = turn.tokens[span.tok_start:span.tok_end]
    return turn.text[toks[0].char_start:toks[-1].char_end]


@dataclass(frozen=True)
class EntityLink:
    span: MentionSpan
    entity_id: str
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PersonalEntityLink:
    personal: MentionSpan
    antecedents: tuple[MentionSpan, ...]
    inherited_entities: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "antecedents", tuple(self.antecedents))
        object.__setattr__(self, "inherited_entities", tuple(self.inherited_entities))
        if self.personal.kind is not MentionKind.PERSONAL:
            raise ValueError("personal span must have kind PERSONAL")
        if not self.antecedents:
            raise ValueError("at least one antecedent required")
        for a in self.antecedents:
            if a.kind is not MentionKind.EXPLICIT:
                raise ValueError("antecedents must have kind EXPLICIT")
            if not a.precedes(self.personal):
                raise ValueError("antecedent must precede the personal mention")


# ---------------------------------------------------------------------------
# Tokenization and POS tagging
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"\S+")
_NUM_RE = re.compile(r"^\d+([.,:/\-]\d+)*$")

_PRON = {
    "i", "me", "you", "he", "him", "she", "her", "it", "we", "us", "they",
    "them", "my", "our", "your", "his", "its", "their", "mine", "ours",
    "yours", "hers", "theirs", "myself", "yourself", "himself", "herself",
    "itself", "ourselves", "yourselves", "themselves", "who", "whom", "what",
    "which", "someone", "something", "anyone", "anything", "everyone",
    "everything", "nobody", "nothing",
}
_DET = {
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "no",
    "every", "each", "both", "either", "neither", "all", "another", "such",
}
_ADP = {
    "of", "in", "on", "at", "by", "for", "with", "from", "to", "into",
    "onto", "over", "under", "about", "after", "before", "between", "during",
    "through", "against", "without", "within", "upon", "across", "behind",
    "beyond", "near", "off", "around", "among", "since", "until",
}
_PART = {"not", "n't"}
_VERB = {
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does",
    "did", "done", "have", "has", "had", "having", "will", "would", "can",
    "could", "shall", "should", "may", "might", "must", "go", "goes", "went",
    "gone", "get", "gets", "got", "make", "makes", "made", "know", "knows",
    "knew", "think", "thinks", "say", "says", "said", "see", "sees", "saw",
    "seen", "want", "wants", "like", "likes", "love", "loves", "need",
    "needs", "use", "take", "takes", "took", "come", "comes", "came", "buy",
    "buys", "bought", "drive", "drives", "drove", "live", "lives", "feel",
    "feels", "felt", "play", "plays", "eat", "eats", "ate", "read", "reads",
    "visit", "visits", "own", "owns",
}
_ADV = {
    "very", "really", "quite", "too", "so", "just", "also", "never",
    "always", "often", "sometimes", "here", "there", "now", "then", "maybe",
    "perhaps", "again", "soon", "yesterday", "today", "tomorrow",
}
_ADJ = {
    "good", "great", "nice", "old", "new", "big", "small", "little",
    "favorite", "happy", "sad", "bad", "best", "better", "worst", "young",
    "beautiful", "red", "blue", "green",
}
_NUM_WORDS = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "twenty", "thirty", "hundred",
    "thousand", "million",
}
_OTHER = {
    "and", "or", "but", "nor", "yet", "oh", "hey", "wow", "yeah", "hi",
    "hello", "um", "uh",
}

_LEXICON: dict[str, str] = {}
for _words, _tag in ((_PRON, "PRON"), (_DET, "DET"), (_ADP, "ADP"),
                     (_PART, "PART"), (_VERB, "VERB"), (_ADV, "ADV"),
                     (_ADJ, "ADJ"), (_NUM_WORDS, "NUM"), (_OTHER, "OTHER")):
    for _w in _words:
        _LEXICON[_w] = _tag

_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ish", "less", "ic")


def _is_punct_char(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


@dataclass(frozen=True)
class LexiconTagger:
    """Word-level tagger: closed-class lexicon first, then number,
    capitalisation, and suffix heuristics, defaulting to NOUN.

    `extra` entries override everything else and give tests a way to pin
    tags for specific words.
    """

    extra: Mapping[str, str] = field(default_factory=dict)

    def tag(self, word: str) -> str:
        lower = word.lower()
        if lower in self.extra:
            return self.extra[lower]
        if lower in _LEXICON:
            return _LEXICON[lower]
        if _NUM_RE.match(word):
            return "NUM"
        if word[:1].isupper():
            return "PROPN"
        if lower.endswith("ly") and len(lower) > 3:
            return "ADV"
        if (lower.endswith("ing") or lower.endswith("ed")) and len(lower) > 4:
            return "VERB"
        if lower.endswith(_ADJ_SUFFIXES) and len(lower) > 4:
            return "ADJ"
        return "NOUN"


DEFAULT_TAGGER = LexiconTagger()


def tokenize(text: str, tagger: LexiconTagger | None = None) -> tuple[Token, ...]:
    """Deterministic whitespace tokenizer.

    Splits on whitespace, then peels leading/trailing punctuation characters
    off each chunk into single-character PUNCT tokens. Total: empty input
    gives an empty tuple.
    """
    tagger = tagger or DEFAULT_TAGGER
    out: list[Token] = []
    for m in _WORD_RE.finditer(text):
        start, end = m.start(), m.end()
        i, j = start, end
        lead: list[int] = []
        trail: list[int] = []
        while i < j and _is_punct_char(text[i]):
            lead.append(i)
            i += 1
        while j > i and _is_punct_char(text[j - 1]):
            trail.append(j - 1)
            j -= 1
        for p in lead:
            out.append(Token(text[p], "PUNCT", p, p + 1))
        if i < j:
            word = text[i:j]
            out.append(Token(word, tagger.tag(word), i, j))
        for p in reversed(trail):
            out.append(Token(text[p], "PUNCT", p, p + 1))
    return tuple(out)


def turn_from_text(speaker: Speaker | str, text: str,
                   tagger: LexiconTagger | None = None) -> Turn:
    return Turn(Speaker(speaker), text, tokenize(text, tagger))


def conversation_from_texts(conv_id: str,
                            utterances: Sequence[tuple[Speaker | str, str]],
                            tagger: LexiconTagger | None = None) -> Conversation:
    return Conversation(conv_id, tuple(
        turn_from_text(s, t, tagger) for s, t in utterances))


# ---------------------------------------------------------------------------
# Annotation records (model output and gold files share this shape)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkRecord:
    start_tok: int
    end_tok: int
    entity: str
    conf: float = 1.0


@dataclass(frozen=True, order=True)
class AntecedentRef:
    turn: int
    start_tok: int
    end_tok: int


@dataclass(frozen=True)
class PersonalRecord:
    start_tok: int
    end_tok: int
    antecedents: tuple[AntecedentRef, ...] = ()
    entities: tuple[str, ...] = ()


@dataclass(frozen=True)
class TurnAnnotation:
    turn: int
    links: tuple[LinkRecord, ...] = ()
    personal: tuple[PersonalRecord, ...] = ()


@dataclass(frozen=True)
class ConversationAnnotation:
    id: str
    turns: tuple[TurnAnnotation, ...] = ()
    split: str | None = None

    def __post_init__(self):
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")


# ---------------------------------------------------------------------------
# JSON IO
# ---------------------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _load_json(path: Path):
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    try:
        return json.loads(raw)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e


def _expect(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise SchemaError(f"{where}: {msg}")


def conversation_to_obj(conv: Conversation) -> dict:
    return {
        "id": conv.id,
        "turns": [
            {
                "speaker": t.speaker.value,
                "text": t.text,
                "tokens": [
                    {"text": tok.text, "pos": tok.pos,
                     "start": tok.char_start, "end": tok.char_end}
                    for tok in t.tokens
                ],
            }
            for t in conv.turns
        ],
    }


def _conversation_from_obj(obj, where: str,
                           tagger: LexiconTagger | None) -> Conversation:
    _expect(isinstance(obj, dict), where, "expected an object")
    _expect(isinstance(obj.get("id"), str) and obj["id"], f"{where}.id",
            "missing or empty conversation id")
    _expect(isinstance(obj.get("turns"), list), f"{where}.turns",
            "missing 'turns' list")
    turns = []
    for i, tobj in enumerate(obj["turns"]):
        twhere = f"{where}.turns[{i}]"
        _expect(isinstance(tobj, dict), twhere, "expected an object")
        spk = tobj.get("speaker")
        _expect(spk in ("USER", "SYSTEM"), f"{twhere}.speaker",
                f"unknown speaker value {spk!r}")
        text = tobj.get("text")
        _expect(isinstance(text, str), f"{twhere}.text", "missing turn text")
        if "tokens" in tobj and tobj["tokens"] is not None:
            toks = []
            for k, kobj in enumerate(tobj["tokens"]):
                kwhere = f"{twhere}.tokens[{k}]"
                _expect(isinstance(kobj, dict), kwhere, "expected an object")
                try:
                    toks.append(Token(kobj["text"], kobj["pos"],
                                      kobj["start"], kobj["end"]))
                except (KeyError, TypeError, ValueError) as e:
                    raise SchemaError(f"{kwhere}: {e}") from e
            try:
                turns.append(Turn(Speaker(spk), text, tuple(toks)))
            except ValueError as e:
                raise SchemaError(f"{twhere}: {e}") from e
        else:
            turns.append(turn_from_text(spk, text, tagger))
    try:
        return Conversation(obj["id"], tuple(turns))
    except ValueError as e:
        raise SchemaError(f"{where}: {e}") from e


def read_conversations(path: str | Path,
                       tagger: LexiconTagger | None = None
                       ) -> tuple[Conversation, ...]:
    """Read a conversations file (a JSON array of conversation objects).

    Turns without a `tokens` field are tokenized internally; pre-tagged
    tokens are passed through untouched.
    """
    path = Path(path)
    data = _load_json(path)
    _expect(isinstance(data, list), str(path), "top level must be a JSON array")
    return tuple(_conversation_from_obj(o, f"{path}[{i}]", tagger)
                 for i, o in enumerate(data))


def write_conversations(path: str | Path, convs: Sequence[Conversation]) -> None:
    Path(path).write_text(
        canonical_json([conversation_to_obj(c) for c in convs]),
        encoding="utf-8")


def annotation_to_obj(ann: ConversationAnnotation) -> dict:
    obj = {
        "id": ann.id,
        "turns": [
            {
                "turn": t.turn,
                "links": [
                    {"start_tok": l.start_tok, "end_tok": l.end_tok,
                     "entity": l.entity, "conf": l.conf}
                    for l in sorted(t.links,
                                    key=lambda l: (l.start_tok, l.end_tok, l.entity))
                ],
                "personal": [
                    {
                        "start_tok": p.start_tok, "end_tok": p.end_tok,
                        "antecedents": [
                            {"turn": a.turn, "start_tok": a.start_tok,
                             "end_tok": a.end_tok}
                            for a in sorted(p.antecedents)
                        ],
                        "entities": sorted(p.entities),
                    }
                    for p in sorted(t.personal,
                                    key=lambda p: (p.start_tok, p.end_tok))
                ],
            }
            for t in sorted(ann.turns, key=lambda t: t.turn)
        ],
    }
    if ann.split is not None:
        obj["split"] = ann.split
    return obj


def _int_field(obj: dict, key: str, where: str) -> int:
    v = obj.get(key)
    _expect(isinstance(v, int) and not isinstance(v, bool), f"{where}.{key}",
            f"expected an integer, got {v!r}")
    return v


def _annotation_from_obj(obj, where: str) -> ConversationAnnotation:
    _expect(isinstance(obj, dict), where, "expected an object")
    _expect(isinstance(obj.get("id"), str) and obj["id"], f"{where}.id",
            "missing or empty conversation id")
    _expect(isinstance(obj.get("turns"), list), f"{where}.turns",
            "missing 'turns' list")
    split = obj.get("split")
    if split is not None:
        _expect(split in SPLITS, f"{where}.split", f"unknown split {split!r}")
    turns = []
    for i, tobj in enumerate(obj["turns"]):
        twhere = f"{where}.turns[{i}]"
        _expect(isinstance(tobj, dict), twhere, "expected an object")
        tidx = _int_field(tobj, "turn", twhere)
        links = []
        for k, lobj in enumerate(tobj.get("links", [])):
            lwhere = f"{twhere}.links[{k}]"
            _expect(isinstance(lobj, dict), lwhere, "expected an object")
            s = _int_field(lobj, "start_tok", lwhere)
            e = _int_field(lobj, "end_tok", lwhere)
            _expect(0 <= s < e, lwhere, f"bad span ({s}, {e})")
            _expect(isinstance(lobj.get("entity"), str) and lobj["entity"],
                    f"{lwhere}.entity", "missing entity id")
            conf = lobj.get("conf", 1.0)
            _expect(isinstance(conf, (int, float)) and 0.0 <= conf <= 1.0,
                    f"{lwhere}.conf", f"bad confidence {conf!r}")
            links.append(LinkRecord(s, e, lobj["entity"], float(conf)))
        by_pos = sorted(links, key=lambda l: (l.start_tok, l.end_tok))
        for a, b in zip(by_pos, by_pos[1:]):
            _expect(a.end_tok <= b.start_tok, twhere,
                    "explicit link spans overlap")
        personal = []
        for k, pobj in enumerate(tobj.get("personal", [])):
            pwhere = f"{twhere}.personal[{k}]"
            _expect(isinstance(pobj, dict), pwhere, "expected an object")
            ps = _int_field(pobj, "start_tok", pwhere)
            pe = _int_field(pobj, "end_tok", pwhere)
            _expect(0 <= ps < pe, pwhere, f"bad span ({ps}, {pe})")
            ants = []
            for m, aobj in enumerate(pobj.get("antecedents", [])):
                awhere = f"{pwhere}.antecedents[{m}]"
                _expect(isinstance(aobj, dict), awhere, "expected an object")
                at = _int_field(aobj, "turn", awhere)
                asv = _int_field(aobj, "start_tok", awhere)
                aev = _int_field(aobj, "end_tok", awhere)
                _expect(0 <= asv < aev and at >= 0, awhere, "bad antecedent span")
                _expect((at, asv, aev) < (tidx, ps, pe), awhere,
                        "antecedent must precede the personal mention")
                ants.append(AntecedentRef(at, asv, aev))
            ents = pobj.get("entities", [])
            _expect(isinstance(ents, list)
                    and all(isinstance(x, str) for x in ents),
                    f"{pwhere}.entities", "expected a list of entity ids")
            personal.append(PersonalRecord(ps, pe, tuple(ants), tuple(ents)))
        turns.append(TurnAnnotation(tidx, tuple(links), tuple(personal)))
    return ConversationAnnotation(obj["id"], tuple(turns), split)


def read_annotations(path: str | Path) -> tuple[ConversationAnnotation, ...]:
    path = Path(path)
    data = _load_json(path)
    _expect(isinstance(data, list), str(path), "top level must be a JSON array")
    return tuple(_annotation_from_obj(o, f"{path}[{i}]")
                 for i, o in enumerate(data))


def write_annotations(path: str | Path,
                      annotations: Sequence[ConversationAnnotation]) -> None:
    """Write annotations in canonical form (round-trip byte-stable)."""
    Path(path).write_text(
        canonical_json([annotation_to_obj(a) for a in annotations]),
        encoding="utf-8")
