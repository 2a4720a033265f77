import json
import math
import random
from itertools import permutations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crel import evaluation as ev
from crel.core import SchemaError


from oracles import oracle_report, random_items


def test_perfect_prediction_all_modes():
    rng = random.Random(0)
    for mode in ev.MODES:
        items = random_items(rng, mode, 4)
        rep = ev.micro_prf({"c": items}, {"c": list(items)}, mode, "strong")
        assert (rep.precision, rep.recall, rep.f1) == (1.0, 1.0, 1.0)


def test_el_one_wrong_entity():
    gold = {"c": [(0, 0, 1, "A"), (0, 2, 3, "B")]}
    pred = {"c": [(0, 0, 1, "A"), (0, 2, 3, "C")]}
    rep = ev.micro_prf(gold, pred, "el", "strong")
    assert (rep.tp, rep.fp, rep.fn) == (1, 1, 1)
    assert rep.precision == rep.recall == rep.f1 == 0.5


def test_zero_denominator_convention():
    rep = ev.micro_prf({"c": [(0, 0, 1)]}, {"c": []}, "md", "strong")
    assert (rep.precision, rep.recall, rep.f1) == (0.0, 0.0, 0.0)
    rep = ev.micro_prf({"c": []}, {"c": []}, "md", "strong")
    assert (rep.precision, rep.recall, rep.f1) == (0.0, 0.0, 0.0)


def test_conversation_id_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        ev.micro_prf({"a": []}, {"b": []})


def test_weak_matching_overlap():
    gold = {"c": [(0, 0, 3)]}
    pred = {"c": [(0, 2, 5)]}
    assert ev.micro_prf(gold, pred, "md", "strong").tp == 0
    assert ev.micro_prf(gold, pred, "md", "weak").tp == 1
    # overlap in different turns never matches
    pred = {"c": [(1, 0, 3)]}
    assert ev.micro_prf(gold, pred, "md", "weak").tp == 0


def test_weak_matching_requires_maximum_matching():
    # naive left-to-right greedy would pair pred[0] with gold[0] and lose
    # one TP; maximum matching finds both
    gold = {"c": [(0, 0, 10), (0, 5, 6)]}
    pred = {"c": [(0, 5, 6), (0, 8, 9)]}
    rep = ev.micro_prf(gold, pred, "md", "weak")
    assert rep.tp == 2


def test_matches_oracle_on_random_instances():
    rng = random.Random(42)
    for trial in range(100):
        mode = ev.MODES[trial % 3]
        matching = ev.MATCHINGS[trial % 2]
        gold = {"c": random_items(rng, mode, rng.randrange(7))}
        pred = {"c": random_items(rng, mode, rng.randrange(7))}
        assert ev.micro_prf(gold, pred, mode, matching) == \
            oracle_report(gold, pred, mode, matching)


def test_swap_symmetry_and_weak_dominates_strong():
    rng = random.Random(7)
    for _ in range(50):
        gold = {"c": random_items(rng, "md", rng.randrange(6))}
        pred = {"c": random_items(rng, "md", rng.randrange(6))}
        for matching in ev.MATCHINGS:
            a = ev.micro_prf(gold, pred, "md", matching)
            b = ev.micro_prf(pred, gold, "md", matching)
            assert a.precision == b.recall and a.recall == b.precision
            assert math.isclose(a.f1, b.f1, abs_tol=1e-12)
        strong = ev.micro_prf(gold, pred, "md", "strong")
        weak = ev.micro_prf(gold, pred, "md", "weak")
        assert weak.tp >= strong.tp


def test_f1_is_harmonic_mean():
    rep = ev.MetricReport.from_counts(3, 2, 5)
    p, r = rep.precision, rep.recall
    assert math.isclose(rep.f1, 2 * p * r / (p + r), rel_tol=1e-12)


# --- Fleiss' kappa ---

def test_kappa_perfect_agreement():
    assert ev.fleiss_kappa([[3, 0], [0, 3]]) == 1.0
    assert ev.fleiss_kappa([[4, 0, 0], [4, 0, 0]]) == 1.0  # expected == 1


def test_kappa_hand_derived_value():
    # per-subject agreement (2,1): (4+1-3)/6 = 1/3; column props .5/.5 so
    # expected = .5; kappa = (1/3 - 1/2) / (1 - 1/2) = -1/3
    assert math.isclose(ev.fleiss_kappa([[2, 1], [1, 2]]), -1.0 / 3.0,
                        abs_tol=1e-12)


def test_kappa_unequal_rater_counts():
    # generalisation: rows may have different totals
    k = ev.fleiss_kappa([[2, 0], [0, 3], [1, 2]])
    assert -1.0 <= k <= 1.0


def test_kappa_requires_two_ratings():
    with pytest.raises(ValueError, match="fewer than 2"):
        ev.fleiss_kappa([[1, 0], [2, 0]])
    with pytest.raises(ValueError):
        ev.fleiss_kappa([])


def test_kappa_permutation_invariance():
    rng = random.Random(3)
    for _ in range(25):
        rows = [[rng.randrange(4) for _ in range(3)] for _ in range(4)]
        rows = [r if sum(r) >= 2 else [2, 1, 0] for r in rows]
        base = ev.fleiss_kappa(rows)
        for perm in permutations(range(3)):
            cols = [[r[j] for j in perm] for r in rows]
            assert math.isclose(ev.fleiss_kappa(cols), base, abs_tol=1e-12)
        shuffled = rows[::-1]
        assert math.isclose(ev.fleiss_kappa(shuffled), base, abs_tol=1e-12)


# --- dataset loading ---

def test_load_dataset_empty(tmp_path):
    path = tmp_path / "g.json"
    path.write_text("[]")
    anns, stats = ev.load_dataset(path)
    assert anns == ()
    assert stats.total.conversations == 0


def test_load_dataset_counts(tmp_path):
    data = [{
        "id": "c1",
        "turns": [
            {"turn": 0, "links": [
                {"start_tok": 0, "end_tok": 1, "entity": "A"},
                {"start_tok": 2, "end_tok": 3, "entity": "B"}]},
            {"turn": 2, "links": [
                {"start_tok": 1, "end_tok": 2, "entity": "C"}],
             "personal": [{"start_tok": 3, "end_tok": 5, "antecedents": [],
                           "entities": []}]},
        ],
    }]
    path = tmp_path / "g.json"
    path.write_text(json.dumps(data))
    _, stats = ev.load_dataset(path)
    t = stats.total
    assert (t.conversations, t.user_utterances, t.links, t.personal) == (1, 2, 3, 1)


def test_load_dataset_split_buckets(tmp_path):
    data = [
        {"id": "a", "split": "train", "turns": [{"turn": 0}]},
        {"id": "b", "split": "val", "turns": [{"turn": 0}, {"turn": 1}]},
    ]
    path = tmp_path / "g.json"
    path.write_text(json.dumps(data))
    _, stats = ev.load_dataset(path)
    assert stats.splits["train"].conversations == 1
    assert stats.splits["val"].user_utterances == 2


def test_load_dataset_duplicate_ids(tmp_path):
    data = [{"id": "a", "turns": []}, {"id": "a", "turns": []}]
    path = tmp_path / "g.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaError, match="duplicate"):
        ev.load_dataset(path)


def test_pel_items_nid_handling(tmp_path):
    data = [{"id": "c", "turns": [{"turn": 1, "personal": [
        {"start_tok": 0, "end_tok": 2, "antecedents": [], "entities": []},
        {"start_tok": 3, "end_tok": 4,
         "antecedents": [{"turn": 0, "start_tok": 0, "end_tok": 1},
                         {"turn": 0, "start_tok": 2, "end_tok": 3}],
         "entities": ["X"]},
    ]}]}]
    path = tmp_path / "g.json"
    path.write_text(json.dumps(data))
    anns, _ = ev.load_dataset(path)
    assert len(ev.pel_items(anns[0])) == 2  # one per antecedent pair
    assert len(ev.pel_items(anns[0], include_nid=True)) == 3


@given(st.lists(st.lists(st.integers(2, 5), min_size=2, max_size=2),
                min_size=1, max_size=6))
def test_kappa_all_agree_is_one(rows):
    # every subject puts all ratings in its own single category
    matrix = [[r[0], 0] if i % 2 == 0 else [0, r[0]]
              for i, r in enumerate(rows)]
    assert math.isclose(ev.fleiss_kappa(matrix), 1.0, abs_tol=1e-12) or \
        ev.fleiss_kappa(matrix) == 1.0
