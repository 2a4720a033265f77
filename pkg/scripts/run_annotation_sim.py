#!/usr/bin/env python3
"""Simulate an annotation campaign: create a project from the demo
conversations, drive five scripted annotators through all three stages,
export the gold file, and print the project statistics.

Usage:
    python scripts/run_annotation_sim.py [workdir]
"""

import json
import sys
from pathlib import Path

from crel import core, synth
from crel.annosvc.project import Project


def scripted_selection(hit):
    if hit.stage == 1:
        wanted = [o["id"] for o in hit.options if o["id"] == "s2:2:4"]
        return wanted or ["none"]
    if hit.stage == 2:
        labels = {o["label"]: o["id"] for o in hit.options}
        for want in ("Life", "Pilot", "Fender"):
            if want in labels:
                return [labels[want]]
        return ["nid"]
    entity_opts = [o["id"] for o in hit.options if "entity" in o]
    return [entity_opts[0]] if entity_opts else ["none"]


def main() -> int:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("anno_run")
    workdir.mkdir(parents=True, exist_ok=True)
    linker = [core.annotation_to_obj(a) for a in synth.demo_gold()]
    for obj in linker:
        obj.pop("split", None)
    (workdir / "linker.json").write_text(json.dumps(linker, indent=2))
    synth.write_demo_kb(workdir / "kb")
    project = Project.create(workdir / "project", synth.demo_conversations(),
                             {"linker_files": ["../linker.json"],
                              "kb": "../kb"})

    annotators = [f"turker-{i}" for i in range(5)]
    submitted = 0
    progress = True
    while progress:
        progress = False
        for annotator in annotators:
            while True:
                hit = project.next_hit_for(annotator)
                if hit is None:
                    break
                project.submit_response(hit.id, annotator,
                                        scripted_selection(hit))
                submitted += 1
                progress = True
    print(f"submitted {submitted} responses")
    print(json.dumps(project.project_stats(), indent=2))
    exported = project.export_gold(workdir / "gold.json")
    print(f"exported {len(exported)} conversations -> {workdir / 'gold.json'}")

    replayed = Project.load(workdir / "project")
    same = replayed.state.fingerprint() == project.state.fingerprint()
    print(f"replay from event log identical: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
