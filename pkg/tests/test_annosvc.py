import json
import random
from pathlib import Path

import pytest

from crel import core, evaluation, synth
from crel.annosvc import project as pr
from crel.annosvc.project import (
    FAILED,
    MAX_REQUIRED,
    OPEN,
    PASSED,
    UNRESOLVED,
    AnnotationError,
    Project,
    agreement_outcome,
    build_stage1_hits,
    split_for,
    stage1_candidate_spans,
)
from crel.core import conversation_from_texts


def write_linker(path: Path, annotations):
    objs = [core.annotation_to_obj(a) for a in annotations]
    for o in objs:
        o.pop("split", None)
    path.write_text(json.dumps(objs))


@pytest.fixture()
def demo_project(tmp_path):
    convs = synth.demo_conversations()
    write_linker(tmp_path / "linker.json", synth.demo_gold())
    synth.write_demo_kb(tmp_path / "kb")
    return Project.create(tmp_path / "proj", convs,
                          {"linker_files": ["../linker.json"],
                           "kb": "../kb", "snapshot_every": 10})


# --- HIT construction ---

def test_stage1_excludes_conversations_without_trigger():
    conv = conversation_from_texts("no-trig", [("USER", "nothing here")])
    assert build_stage1_hits([conv]) == []


def test_stage1_candidate_prefixes():
    conv = conversation_from_texts("c", [("USER", "my cars today")])
    spans = stage1_candidate_spans(conv)
    assert [(s.tok_start, s.tok_end) for s in spans] == [(0, 2), (0, 3)]
    (hit,) = build_stage1_hits([conv])
    labels = [o["label"] for o in hit["options"]]
    assert labels == ["my cars", "my cars today", "No personal entity mention"]


def test_stage1_trigger_in_system_turn_only():
    conv = conversation_from_texts("sys-trig", [
        ("SYSTEM", "my cars are great"),
        ("USER", "nice ride"),
    ])
    assert build_stage1_hits([conv]) == []


def test_stage1_ten_follower_cap():
    text = "my " + " ".join(f"w{i}" for i in range(15))
    conv = conversation_from_texts("cap", [("USER", text)])
    spans = stage1_candidate_spans(conv)
    assert max(s.tok_end - s.tok_start for s in spans) == 11


def test_empty_input_no_hits():
    assert build_stage1_hits([]) == []


# --- agreement rule traces ---

def r(option, annotator="a"):
    return {"annotator": annotator, "selection": [option], "ts": 0.0}


def test_stage1_two_of_three_pass():
    responses = [{"annotator": x, "selection": ["s0:0:2"], "ts": 0.0}
                 for x in "ab"] + \
                [{"annotator": "c", "selection": ["s0:0:3"], "ts": 0.0}]
    action, status, result = agreement_outcome(1, responses, 3)
    assert (action, status, result) == ("close", PASSED, ["s0:0:2"])


def test_stage1_all_disagree_fails():
    responses = [{"annotator": x, "selection": [f"s0:0:{i}"], "ts": 0.0}
                 for i, x in enumerate("abc", start=2)]
    action, status, _ = agreement_outcome(1, responses, 3)
    assert (action, status) == ("close", FAILED)


def test_stage1_set_agreement_is_exact():
    responses = [
        {"annotator": "a", "selection": ["x", "y"], "ts": 0.0},
        {"annotator": "b", "selection": ["y", "x"], "ts": 0.0},
        {"annotator": "c", "selection": ["x"], "ts": 0.0},
    ]
    action, status, result = agreement_outcome(1, responses, 3)
    assert (action, status, result) == ("close", PASSED, ["x", "y"])


def test_stage2_trace_extend_then_pass():
    responses = [r("A", "a1"), r("A", "a2"), r("B", "a3")]
    assert agreement_outcome(2, responses, 3) == ("extend", None, [])
    responses += [r("A", "a4"), r("A", "a5")]
    assert agreement_outcome(2, responses, 5) == ("close", PASSED, ["A"])


def test_stage2_trace_extend_then_fail():
    responses = [r("A", "a1"), r("A", "a2"), r("B", "a3"),
                 r("B", "a4"), r("C", "a5")]
    assert agreement_outcome(2, responses, 5) == ("close", FAILED, [])


def test_stage2_three_of_three_passes_immediately():
    responses = [r("A", x) for x in "abc"]
    assert agreement_outcome(2, responses, 3) == ("close", PASSED, ["A"])


def test_stage2_all_disagree_fails_without_extension():
    responses = [r(o, x) for o, x in zip("ABC", "abc")]
    assert agreement_outcome(2, responses, 3) == ("close", FAILED, [])


def test_stage3_trace_majority_after_extension():
    responses = [r(o, x) for o, x in zip("ABC", "abc")]
    assert agreement_outcome(3, responses, 3) == ("extend", None, [])
    responses += [r("A", "d"), r("C", "e")]
    # counts A:2 B:1 C:2 -> tie between A and C
    action, status, result = agreement_outcome(3, responses, 5)
    assert (action, status) == ("close", UNRESOLVED)
    assert result == ["A", "C"]


def test_stage3_majority_resolves():
    responses = [r(o, x) for o, x in zip("ABC", "abc")] + \
        [r("B", "d"), r("B", "e")]
    assert agreement_outcome(3, responses, 5) == ("close", PASSED, ["B"])


def test_stage3_two_of_three_passes():
    responses = [r("A", "a"), r("A", "b"), r("B", "c")]
    assert agreement_outcome(3, responses, 3) == ("close", PASSED, ["A"])


# --- submission validation ---

def test_duplicate_annotator_rejected(demo_project):
    hit = demo_project.next_hit_for("a1", 1)
    demo_project.submit_response(hit.id, "a1", ["none"], ts=0.0)
    with pytest.raises(AnnotationError, match="already responded"):
        demo_project.submit_response(hit.id, "a1", ["none"], ts=0.0)


def test_unknown_option_rejected(demo_project):
    hit = demo_project.next_hit_for("a1", 1)
    with pytest.raises(AnnotationError, match="unknown option"):
        demo_project.submit_response(hit.id, "a1", ["bogus"], ts=0.0)


def test_closed_hit_rejects_responses(demo_project):
    hit = demo_project.next_hit_for("a1", 1)
    for a in ("a1", "a2", "a3"):
        demo_project.submit_response(hit.id, a, ["none"], ts=0.0)
    assert demo_project.state.hits[hit.id].status == PASSED
    with pytest.raises(AnnotationError, match="closed"):
        demo_project.submit_response(hit.id, "a4", ["none"], ts=0.0)


def test_no_mention_must_be_alone(demo_project):
    hit = demo_project.next_hit_for("a1", 1)
    some_span = next(o["id"] for o in hit.options if o["id"] != "none")
    with pytest.raises(AnnotationError, match="alone"):
        demo_project.submit_response(hit.id, "a1", ["none", some_span],
                                     ts=0.0)


def test_unknown_hit(demo_project):
    with pytest.raises(KeyError):
        demo_project.submit_response("h9-zzz", "a1", ["none"], ts=0.0)


# --- scripted full runs ---

HONDA_S1 = ["s2:2:4"]


def run_script(project, stage2_picks, stage3_pick="first",
               annotators=("a1", "a2", "a3", "a4", "a5")):
    """Drive every HIT to closure; all annotators agree on the script."""
    progress = True
    while progress:
        progress = False
        for a in annotators:
            while True:
                hit = project.next_hit_for(a)
                if hit is None:
                    break
                if hit.stage == 1:
                    sel = [o["id"] for o in hit.options
                           if o["id"] in HONDA_S1] or ["none"]
                elif hit.stage == 2:
                    labels = {o["label"]: o["id"] for o in hit.options}
                    sel = None
                    for want in stage2_picks:
                        if want in labels:
                            sel = [labels[want]]
                            break
                    sel = sel or ["nid"]
                else:
                    mention_opts = [o for o in hit.options if "entity" in o]
                    sel = ([mention_opts[0]["id"]] if mention_opts
                           else ["none"])
                project.submit_response(hit.id, a, sel, ts=1.0)
                progress = True


def test_multi_antecedent_chain(demo_project):
    run_script(demo_project, stage2_picks=("Life", "Pilot", "Fender"))
    chain = demo_project.state.chains["demo-honda/2:2:4"]
    assert chain["status"] == "resolved"
    assert [(s["turn"], s["start_tok"], s["end_tok"])
            for s in chain["selected"]] == [(0, 3, 4), (0, 6, 7)]


def test_required_never_exceeds_five(demo_project):
    run_script(demo_project, stage2_picks=("Life", "Pilot", "Fender"))
    assert all(h.required <= MAX_REQUIRED
               for h in demo_project.state.hits.values())


def test_gate_soundness_events(demo_project):
    run_script(demo_project, stage2_picks=("Life", "Pilot", "Fender"))
    events = [json.loads(line) for line in
              demo_project.events_path.read_text().splitlines()]
    stage1_pass: dict[str, int] = {}
    stage2_pass: dict[str, int] = {}
    for ev in events:
        if ev["type"] == "conv_stage" and ev["passed"]:
            if ev["stage"] == 1:
                stage1_pass[ev["conv"]] = ev["seq"]
            elif ev["stage"] == 2:
                stage2_pass[ev["conv"]] = ev["seq"]
        if ev["type"] == "hits_built":
            for hit in ev["hits"]:
                if hit["stage"] == 2:
                    assert stage1_pass.get(hit["conv"], 1 << 60) < ev["seq"]
                if hit["stage"] == 3:
                    assert stage2_pass.get(hit["conv"], 1 << 60) < ev["seq"]


def test_failed_stage2_blocks_stage3(tmp_path):
    convs = synth.demo_conversations()
    write_linker(tmp_path / "linker.json", synth.demo_gold())
    project = Project.create(tmp_path / "proj", convs,
                             {"linker_files": ["../linker.json"]})
    # agree on stage 1 for honda
    hit = project.state.hits["h1-demo-honda"]
    for a in ("a1", "a2", "a3"):
        project.submit_response(hit.id, a, HONDA_S1, ts=0.0)
    # stage 2: no two annotators ever agree -> FAILED chain
    (h2,) = [h for h in project.state.hits.values()
             if h.stage == 2 and h.status == OPEN]
    opts = [o["id"] for o in h2.options]
    assert len(opts) >= 3
    for a, o in zip(("a1", "a2", "a3"), opts[:3]):
        project.submit_response(h2.id, a, [o], ts=0.0)
    assert project.state.hits[h2.id].status == FAILED
    assert project.state.conv_stage[("demo-honda", 2)] is False
    assert not any(h.stage == 3 and h.conv == "demo-honda"
                   for h in project.state.hits.values())


def test_stage2_extension_flow_in_project(tmp_path):
    convs = synth.demo_conversations()
    write_linker(tmp_path / "linker.json", synth.demo_gold())
    project = Project.create(tmp_path / "proj", convs,
                             {"linker_files": ["../linker.json"]})
    hit = project.state.hits["h1-demo-honda"]
    for a in ("a1", "a2", "a3"):
        project.submit_response(hit.id, a, HONDA_S1, ts=0.0)
    (h2,) = [h for h in project.state.hits.values()
             if h.stage == 2 and h.status == OPEN]
    life = next(o["id"] for o in h2.options if o["label"] == "Life")
    pilot = next(o["id"] for o in h2.options if o["label"] == "Pilot")
    project.submit_response(h2.id, "a1", [life], ts=0.0)
    project.submit_response(h2.id, "a2", [life], ts=0.0)
    project.submit_response(h2.id, "a3", [pilot], ts=0.0)
    assert project.state.hits[h2.id].required == 5
    assert project.state.hits[h2.id].status == OPEN
    project.submit_response(h2.id, "a4", [life], ts=0.0)
    assert project.state.hits[h2.id].status == OPEN  # needs all 5
    project.submit_response(h2.id, "a5", [life], ts=0.0)
    assert project.state.hits[h2.id].status == PASSED
    assert project.state.hits[h2.id].result == [life]


def test_zero_candidate_stage2_offers_only_nid(tmp_path):
    conv = conversation_from_texts("lonely", [("USER", "i adore my cars")])
    project = Project.create(tmp_path / "proj", [conv], {})
    hit = project.state.hits["h1-lonely"]
    sel = ["s0:2:4"]
    for a in ("a1", "a2", "a3"):
        project.submit_response(hit.id, a, sel, ts=0.0)
    (h2,) = [h for h in project.state.hits.values() if h.stage == 2]
    assert [o["id"] for o in h2.options] == ["nid"]


def test_replay_determinism_random_interleavings(tmp_path):
    convs = synth.demo_conversations()
    write_linker(tmp_path / "linker.json", synth.demo_gold())
    synth.write_demo_kb(tmp_path / "kb")
    for trial in range(10):
        rng = random.Random(trial)
        root = tmp_path / f"proj{trial}"
        project = Project.create(root, convs,
                                 {"linker_files": ["../linker.json"],
                                  "kb": "../kb", "snapshot_every": 7})
        annotators = [f"a{i}" for i in range(5)]
        for _ in range(200):
            a = rng.choice(annotators)
            hit = project.next_hit_for(a)
            if hit is None:
                continue
            k = 1
            if hit.stage == 1 and rng.random() < 0.5:
                k = min(2, max(1, len(hit.options) - 1))
            pool = [o["id"] for o in hit.options]
            if hit.stage == 1 and k > 1:
                pool = [p for p in pool if p != "none"]
            sel = rng.sample(pool, k)
            try:
                project.submit_response(hit.id, a, sel,
                                        ts=float(rng.randrange(1000)))
            except AnnotationError:
                continue
        replayed = Project.load(root)
        assert replayed.state.fingerprint() == project.state.fingerprint()


def test_export_round_trip(demo_project, tmp_path):
    run_script(demo_project, stage2_picks=("Life", "Pilot", "Fender"))
    out = tmp_path / "gold.json"
    exported = demo_project.export_gold(out)
    assert len(exported) == 2
    loaded, stats = evaluation.load_dataset(out)
    assert stats.total.conversations == 2
    assert stats.total.personal == 2
    total_links = sum(len(t.links) for a in loaded for t in a.turns)
    passed_entity_hits = [
        h for h in demo_project.state.hits.values()
        if h.stage == 3 and h.status == PASSED
        and "entity" in h.option(h.result[0])]
    assert total_links == len(passed_entity_hits)
    # split tags follow the deterministic hash
    for ann in loaded:
        assert ann.split == split_for(ann.id)


def test_stats_cross_module_kappa(demo_project):
    run_script(demo_project, stage2_picks=("Life", "Pilot", "Fender"))
    stats = demo_project.project_stats()
    for stage in ("1", "2", "3"):
        assert stats["stages"][stage]["kappa"] == 1.0
        assert stats["stages"][stage]["pass_rate"] == 1.0


def test_stats_empty_project_errors(tmp_path):
    conv = conversation_from_texts("x", [("USER", "my cars exist")])
    project = Project.create(tmp_path / "p", [conv], {})
    with pytest.raises(ValueError, match="no completed"):
        project.project_stats()


def test_split_assignment_is_deterministic_and_balanced():
    ids = [f"conv-{i}" for i in range(1000)]
    splits = [split_for(i) for i in ids]
    assert splits == [split_for(i) for i in ids]
    from collections import Counter
    counts = Counter(splits)
    assert 500 < counts["train"] < 700
    assert 100 < counts["val"] < 300
    assert 100 < counts["test"] < 300
