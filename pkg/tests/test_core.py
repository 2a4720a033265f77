import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crel import core
from crel.core import (
    Conversation,
    LexiconTagger,
    MentionKind,
    MentionSpan,
    PersonalEntityLink,
    SchemaError,
    Speaker,
    Token,
    Turn,
    tokenize,
)


def test_tokenize_empty():
    assert tokenize("") == ()


def test_tokenize_my_cars_offsets():
    toks = tokenize("my cars.")
    assert [(t.text, t.char_start, t.char_end) for t in toks] == [
        ("my", 0, 2), ("cars", 3, 7), (".", 7, 8)]
    assert toks[0].pos == "PRON"
    assert toks[1].pos == "NOUN"
    assert toks[2].pos == "PUNCT"


def test_tokenize_lexicon_pos():
    toks = tokenize("I love Honda")
    assert [t.pos for t in toks] == ["PRON", "VERB", "PROPN"]


def test_tokenize_extra_lexicon_overrides():
    tagger = LexiconTagger(extra={"love": "NOUN"})
    toks = tokenize("I love Honda", tagger)
    assert toks[1].pos == "NOUN"


def test_tokenize_punctuation_peeling():
    toks = tokenize('"hello," she said.')
    assert [t.text for t in toks] == ['"', "hello", ",", '"', "she", "said", "."]
    assert all(t.pos == "PUNCT" for t in toks if len(t.text) == 1
               and not t.text.isalnum())


def test_tokenize_interior_punctuation_kept():
    toks = tokenize("don't stop")
    assert toks[0].text == "don't"


@given(st.text(max_size=200))
def test_tokenize_reconstructs_text(text):
    toks = tokenize(text)
    rebuilt = list(text)
    for tok in toks:
        assert text[tok.char_start:tok.char_end] == tok.text
        for i in range(tok.char_start, tok.char_end):
            rebuilt[i] = None  # each char covered at most once
    # everything not covered by a token is whitespace
    assert all(ch is None or ch.isspace() for ch in rebuilt)


@given(st.text(max_size=200))
def test_tokenize_offsets_sorted(text):
    toks = tokenize(text)
    for a, b in zip(toks, toks[1:]):
        assert a.char_end <= b.char_start


def test_token_invariants():
    with pytest.raises(ValueError):
        Token("x", "NOUN", 3, 3)
    with pytest.raises(ValueError):
        Token("x", "BOGUS", 0, 1)


def test_turn_rejects_mismatched_tokens():
    with pytest.raises(ValueError):
        Turn(Speaker.USER, "hello", (Token("bye", "NOUN", 0, 3),))


def test_conversation_requires_user_turn():
    with pytest.raises(ValueError):
        Conversation("c", (core.turn_from_text("SYSTEM", "hi"),))
    with pytest.raises(ValueError):
        Conversation("", (core.turn_from_text("USER", "hi"),))


def test_mention_span_invariants():
    with pytest.raises(ValueError):
        MentionSpan(0, 2, 2)
    s1 = MentionSpan(0, 1, 3)
    s2 = MentionSpan(1, 0, 1)
    assert s1.precedes(s2)
    assert MentionSpan(0, 0, 5).contains(s1)


def test_personal_entity_link_invariants():
    p = MentionSpan(1, 0, 2, MentionKind.PERSONAL)
    a = MentionSpan(0, 0, 1)
    PersonalEntityLink(p, (a,), ("E",))
    with pytest.raises(ValueError):
        PersonalEntityLink(p, ())
    with pytest.raises(ValueError):
        PersonalEntityLink(p, (MentionSpan(2, 0, 1),))  # does not precede


CONV_FIXTURE = [
    {
        "id": "c1",
        "turns": [
            {"speaker": "USER", "text": "I love my cars."},
            {"speaker": "SYSTEM", "text": "Nice!"},
        ],
    }
]


def test_read_conversations(tmp_path):
    path = tmp_path / "conv.json"
    path.write_text(json.dumps(CONV_FIXTURE))
    convs = core.read_conversations(path)
    assert len(convs) == 1
    assert len(convs[0].turns) == 2
    assert convs[0].turns[0].tokens[2].text == "my"


def test_read_conversations_pretagged_passthrough(tmp_path):
    data = [{"id": "c1", "turns": [{
        "speaker": "USER", "text": "ab cd",
        "tokens": [{"text": "ab", "pos": "VERB", "start": 0, "end": 2},
                   {"text": "cd", "pos": "ADV", "start": 3, "end": 5}]}]}]
    path = tmp_path / "conv.json"
    path.write_text(json.dumps(data))
    convs = core.read_conversations(path)
    assert [t.pos for t in convs[0].turns[0].tokens] == ["VERB", "ADV"]


def test_read_conversations_missing_turns(tmp_path):
    path = tmp_path / "conv.json"
    path.write_text(json.dumps([{"id": "c1"}]))
    with pytest.raises(SchemaError, match="turns"):
        core.read_conversations(path)


def test_read_conversations_unknown_speaker(tmp_path):
    path = tmp_path / "conv.json"
    path.write_text(json.dumps(
        [{"id": "c1", "turns": [{"speaker": "BOT", "text": "hi"}]}]))
    with pytest.raises(SchemaError, match="speaker"):
        core.read_conversations(path)


def test_read_conversations_invalid_json_names_line(tmp_path):
    path = tmp_path / "conv.json"
    path.write_text('[\n{"id": }\n]')
    with pytest.raises(SchemaError, match=r":2:"):
        core.read_conversations(path)


def test_conversations_round_trip_bytes(tmp_path):
    path = tmp_path / "conv.json"
    path.write_text(json.dumps(CONV_FIXTURE))
    convs = core.read_conversations(path)
    out1 = tmp_path / "out1.json"
    out2 = tmp_path / "out2.json"
    core.write_conversations(out1, convs)
    core.write_conversations(out2, core.read_conversations(out1))
    assert out1.read_bytes() == out2.read_bytes()


ANN_FIXTURE = [
    {
        "id": "c1",
        "split": "train",
        "turns": [
            {
                "turn": 0,
                "links": [{"start_tok": 3, "end_tok": 4, "entity": "Life",
                           "conf": 0.75}],
                "personal": [],
            },
            {
                "turn": 2,
                "links": [],
                "personal": [{
                    "start_tok": 2, "end_tok": 4,
                    "antecedents": [{"turn": 0, "start_tok": 3, "end_tok": 4}],
                    "entities": ["Life"],
                }],
            },
        ],
    }
]


def test_annotations_round_trip_bytes(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(ANN_FIXTURE))
    anns = core.read_annotations(path)
    out1 = tmp_path / "o1.json"
    out2 = tmp_path / "o2.json"
    core.write_annotations(out1, anns)
    core.write_annotations(out2, core.read_annotations(out1))
    assert out1.read_bytes() == out2.read_bytes()


def test_annotations_reject_overlapping_links(tmp_path):
    bad = [{"id": "c", "turns": [{"turn": 0, "links": [
        {"start_tok": 0, "end_tok": 2, "entity": "A"},
        {"start_tok": 1, "end_tok": 3, "entity": "B"},
    ]}]}]
    path = tmp_path / "g.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(SchemaError, match="overlap"):
        core.read_annotations(path)


def test_annotations_reject_non_preceding_antecedent(tmp_path):
    bad = [{"id": "c", "turns": [{"turn": 0, "personal": [{
        "start_tok": 0, "end_tok": 2,
        "antecedents": [{"turn": 1, "start_tok": 0, "end_tok": 1}],
    }]}]}]
    path = tmp_path / "g.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(SchemaError, match="precede"):
        core.read_annotations(path)


def test_span_text_preserves_spacing():
    conv = core.conversation_from_texts(
        "c", [("USER", "the  car dealers here")])
    span = MentionSpan(0, 1, 3)
    assert core.span_text(conv, span) == "car dealers"
