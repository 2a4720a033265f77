"""Synthetic desk-scale fixtures: a hand-built KB and demo conversations
for end-to-end runs, plus separable training sets for overfit checks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import (
    AntecedentRef,
    Conversation,
    ConversationAnnotation,
    LinkRecord,
    MentionKind,
    MentionSpan,
    PersonalRecord,
    TurnAnnotation,
    conversation_from_texts,
)
from .md import MdExample
from .pel import PelExample

DEMO_ALIASES = [
    ("life", "Life", 0.6),
    ("life", "Life (magazine)", 0.4),
    ("pilot", "Pilot", 0.7),
    ("pilot", "Pilot (TV series)", 0.3),
    ("car dealers", "Car dealership", 1.0),
    ("car dealer", "Car dealership", 1.0),
    ("honda", "Honda", 1.0),
    ("car", "Car", 0.9),
    ("cars", "Car", 0.9),
    ("fender", "Fender", 1.0),
    ("keyboard", "Keyboard instrument", 1.0),
    ("guitar", "Guitar", 1.0),
]

DEMO_ENTITY_VECS = {
    "Life": [1.0, 0.8, 0.0, 0.1],
    "Pilot": [0.9, 1.0, 0.1, 0.0],
    "Honda": [1.0, 1.0, 0.2, 0.0],
    "Car": [0.8, 0.9, 0.0, 0.0],
    "Car dealership": [0.9, 0.7, 0.1, 0.0],
    "Life (magazine)": [0.0, 0.1, 1.0, 0.8],
    "Pilot (TV series)": [0.1, 0.0, 0.8, 1.0],
    "Fender": [0.0, 0.2, 0.1, 1.0],
    "Keyboard instrument": [0.1, 0.0, 0.2, 0.9],
    "Guitar": [0.0, 0.1, 0.0, 1.0],
}

DEMO_WORD_VECS = {
    "car": [0.9, 0.9, 0.0, 0.0],
    "cars": [0.9, 0.8, 0.1, 0.0],
    "drive": [0.8, 0.7, 0.0, 0.0],
    "dealers": [0.7, 0.6, 0.0, 0.1],
    "honda": [1.0, 0.9, 0.1, 0.0],
    "magazine": [0.0, 0.1, 1.0, 0.7],
    "episode": [0.0, 0.0, 0.8, 1.0],
    "play": [0.0, 0.1, 0.1, 0.9],
    "guitar": [0.0, 0.0, 0.1, 1.0],
}

DEMO_TITLES = [
    "Life", "Life (magazine)", "Pilot", "Pilot (TV series)", "Honda",
    "Car", "Car dealership", "Fender", "Keyboard instrument", "Guitar",
]


def write_demo_kb(kb_dir: str | Path) -> Path:
    kb_dir = Path(kb_dir)
    kb_dir.mkdir(parents=True, exist_ok=True)
    (kb_dir / "aliases.tsv").write_text(
        "".join(f"{a}\t{e}\t{p}\n" for a, e, p in DEMO_ALIASES),
        encoding="utf-8")
    (kb_dir / "entity_vecs.tsv").write_text(
        "".join(f"{e}\t{' '.join(map(str, v))}\n"
                for e, v in DEMO_ENTITY_VECS.items()), encoding="utf-8")
    (kb_dir / "word_vecs.tsv").write_text(
        "".join(f"{w}\t{' '.join(map(str, v))}\n"
                for w, v in DEMO_WORD_VECS.items()), encoding="utf-8")
    (kb_dir / "titles.txt").write_text(
        "".join(t + "\n" for t in DEMO_TITLES), encoding="utf-8")
    return kb_dir


def demo_conversations() -> tuple[Conversation, ...]:
    honda = conversation_from_texts("demo-honda", [
        ("USER", "I drive a Life and a Pilot."),
        ("SYSTEM", "Nice! Honda makes both."),
        ("USER", "I love my cars. I bought them at one of the car dealers nearby."),
    ])
    guitar = conversation_from_texts("demo-guitar", [
        ("USER", "I have a Fender and a keyboard."),
        ("SYSTEM", "A classic pairing."),
        ("USER", "I play my guitar at home."),
    ])
    return honda, guitar


def demo_gold() -> tuple[ConversationAnnotation, ...]:
    honda = ConversationAnnotation("demo-honda", (
        TurnAnnotation(0, links=(LinkRecord(3, 4, "Life"),
                                 LinkRecord(6, 7, "Pilot"))),
        TurnAnnotation(2, links=(LinkRecord(12, 14, "Car dealership"),),
                       personal=(PersonalRecord(
                           2, 4,
                           (AntecedentRef(0, 3, 4), AntecedentRef(0, 6, 7)),
                           ("Life", "Pilot")),)),
    ), split="train")
    guitar = ConversationAnnotation("demo-guitar", (
        TurnAnnotation(0, links=(LinkRecord(3, 4, "Fender"),
                                 LinkRecord(6, 7, "Keyboard instrument"))),
        TurnAnnotation(2, personal=(PersonalRecord(
            2, 4, (AntecedentRef(0, 3, 4),), ("Fender",)),)),
    ), split="train")
    return honda, guitar


# ---------------------------------------------------------------------------
# Separable training fixtures
# ---------------------------------------------------------------------------

_ITEMS = ["dog", "cat", "car", "bike", "book", "boat", "phone", "lamp",
          "kite", "drum"]


def separable_pel_dataset(n_conversations: int = 10, seed: int = 0
                          ) -> list[PelExample]:
    """Conversations where the personal mention repeats one of two earlier
    item words; the matching item is the only gold antecedent, so pairs are
    separable by token identity."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n_conversations):
        a, b = rng.choice(len(_ITEMS), size=2, replace=False)
        item_a, item_b = _ITEMS[a], _ITEMS[b]
        trigger = "my" if i % 2 == 0 else "our"
        conv = conversation_from_texts(f"pel-{i}", [
            ("USER", f"i have a {item_a} and a {item_b}"),
            ("SYSTEM", "nice"),
            ("USER", f"i love {trigger} {item_a}"),
        ])
        explicit = (MentionSpan(0, 3, 4), MentionSpan(0, 6, 7))
        personal = (MentionSpan(2, 2, 4, MentionKind.PERSONAL),)
        examples.append(PelExample(
            conv, personal, explicit,
            frozenset({(personal[0], explicit[0])})))
    return examples


def separable_md_dataset(n_turns: int = 10, seed: int = 0
                         ) -> list[MdExample]:
    """One- and two-token mentions drawn from a small closed vocabulary,
    memorisable by a linear head over the lite encoder."""
    rng = np.random.default_rng(seed)
    places = ["paris", "london", "tokyo", "oslo", "cairo"]
    foods = [("deep", "dish"), ("hot", "pot"), ("ice", "cream")]
    examples = []
    for i in range(n_turns):
        place = places[int(rng.integers(len(places)))]
        f1, f2 = foods[int(rng.integers(len(foods)))]
        conv = conversation_from_texts(f"md-{i}", [
            ("USER", f"i visited {place} and ate {f1} {f2} there"),
        ])
        gold = (MentionSpan(0, 2, 3), MentionSpan(0, 5, 7))
        examples.append(MdExample(conv, {0: gold}))
    return examples
