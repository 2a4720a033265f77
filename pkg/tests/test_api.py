import json

import pytest
from fastapi.testclient import TestClient

from crel import core, synth
from crel.annosvc.api import create_app
from crel.annosvc.project import Project


@pytest.fixture()
def client(tmp_path):
    convs = synth.demo_conversations()
    linker = [core.annotation_to_obj(a) for a in synth.demo_gold()]
    for o in linker:
        o.pop("split", None)
    (tmp_path / "linker.json").write_text(json.dumps(linker))
    synth.write_demo_kb(tmp_path / "kb")
    project = Project.create(tmp_path / "proj", convs,
                             {"linker_files": ["../linker.json"],
                              "kb": "../kb"})
    return TestClient(create_app(project)), project


def test_next_hit_and_submit_flow(client):
    http, project = client
    res = http.get("/api/hits/next", params={"annotator": "a1", "stage": 1})
    assert res.status_code == 200
    body = res.json()
    assert body["ok"] is True
    hit = body["hit"]
    assert hit["stage"] == 1
    assert hit["dialogue"][0]["speaker"] == "USER"
    option_ids = {o["id"] for o in hit["options"]}
    res = http.post(f"/api/hits/{hit['id']}/response",
                    json={"annotator": "a1", "selection": ["none"]})
    assert res.status_code == 200
    assert res.json()["hit"]["n_responses"] == 1
    assert set(res.json()["hit"]["options"][0]) <= {"id", "label", "span"}
    # the same annotator is not offered this hit again
    res = http.get("/api/hits/next", params={"annotator": "a1", "stage": 1})
    assert res.json()["hit"]["id"] != hit["id"]
    assert option_ids  # sanity


def test_duplicate_submission_conflict(client):
    http, _ = client
    hit = http.get("/api/hits/next",
                   params={"annotator": "a1"}).json()["hit"]
    body = {"annotator": "a1", "selection": ["none"]}
    assert http.post(f"/api/hits/{hit['id']}/response",
                     json=body).status_code == 200
    res = http.post(f"/api/hits/{hit['id']}/response", json=body)
    assert res.status_code == 409
    assert res.json() == {"ok": False,
                          "error": res.json()["error"]}
    assert "already responded" in res.json()["error"]


def test_unknown_hit_404(client):
    http, _ = client
    res = http.get("/api/hits/h9-missing")
    assert res.status_code == 404
    assert res.json()["ok"] is False
    res = http.post("/api/hits/h9-missing/response",
                    json={"annotator": "a", "selection": ["none"]})
    assert res.status_code == 404


def test_bad_option_409(client):
    http, _ = client
    hit = http.get("/api/hits/next",
                   params={"annotator": "a1"}).json()["hit"]
    res = http.post(f"/api/hits/{hit['id']}/response",
                    json={"annotator": "a1", "selection": ["zzz"]})
    assert res.status_code == 409
    assert res.json()["ok"] is False


def test_progress_and_export(client):
    http, project = client
    res = http.get("/api/project/progress")
    assert res.json()["progress"]["1"]["open"] == 2
    # close both stage-1 hits with no-mention agreement; stage 3 still runs
    # over the pooled explicit mentions
    for hid in ("h1-demo-honda", "h1-demo-guitar"):
        for a in ("a1", "a2", "a3"):
            http.post(f"/api/hits/{hid}/response",
                      json={"annotator": a, "selection": ["none"]})
    res = http.post("/api/project/export")
    assert res.json()["conversations"] == 0  # stage 3 not finished yet
    for a in ("a1", "a2", "a3"):
        while True:
            hit = http.get("/api/hits/next",
                           params={"annotator": a}).json()["hit"]
            if hit is None:
                break
            entity_opts = [o["id"] for o in hit["options"] if "entity" in o]
            sel = [entity_opts[0]] if entity_opts else ["none"]
            http.post(f"/api/hits/{hit['id']}/response",
                      json={"annotator": a, "selection": sel})
    res = http.get("/api/project/stats")
    assert res.status_code == 200
    assert res.json()["stats"]["stages"]["1"]["passed"] == 2
    res = http.post("/api/project/export")
    assert res.status_code == 200
    assert res.json()["ok"] is True
    exported = core.read_annotations(res.json()["path"])
    assert {a.id for a in exported} == {"demo-honda", "demo-guitar"}
    # no-mention conversations export with links but no personal records
    assert all(not t.personal for a in exported for t in a.turns)
    assert any(t.links for a in exported for t in a.turns)


def test_stats_on_empty_project_400(client):
    http, _ = client
    res = http.get("/api/project/stats")
    assert res.status_code == 400
    assert res.json()["ok"] is False
