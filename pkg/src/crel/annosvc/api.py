"""HTTP JSON API over a live annotation project.

Every response body carries {"ok": bool, ...}; client errors come back as
HTTP 4xx with {"ok": false, "error": str}. When a UI directory is supplied
its static assets are served at the root path.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .project import OPEN, AnnotationError, HitState, Project


class ResponseBody(BaseModel):
    annotator: str
    selection: list[str]


def hit_view(project: Project, hit: HitState) -> dict:
    conv = project.conversations[hit.conv]
    return {
        "id": hit.id,
        "stage": hit.stage,
        "conv": hit.conv,
        "payload": hit.payload,
        "options": hit.options,
        "required": hit.required,
        "n_responses": len(hit.responses),
        "status": hit.status,
        "dialogue": [
            {"speaker": turn.speaker.value, "text": turn.text,
             "tokens": [tok.text for tok in turn.tokens]}
            for turn in conv.turns
        ],
    }


def progress_view(project: Project) -> dict:
    out = {}
    for stage in (1, 2, 3):
        hits = [h for h in project.state.hits.values() if h.stage == stage]
        out[str(stage)] = {
            "open": sum(1 for h in hits if h.status == OPEN),
            "closed": sum(1 for h in hits if h.status != OPEN),
        }
    return out


def create_app(project: Project, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="crel annotation service")

    @app.exception_handler(AnnotationError)
    async def annotation_error(_: Request, exc: AnnotationError):
        return JSONResponse(status_code=409,
                            content={"ok": False, "error": str(exc)})

    @app.exception_handler(KeyError)
    async def missing(_: Request, exc: KeyError):
        return JSONResponse(status_code=404,
                            content={"ok": False, "error": str(exc)})

    @app.exception_handler(ValueError)
    async def invalid(_: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"ok": False, "error": str(exc)})

    @app.get("/api/project/stats")
    def stats():
        return {"ok": True, "stats": project.project_stats(),
                "progress": progress_view(project)}

    @app.get("/api/project/progress")
    def progress():
        return {"ok": True, "progress": progress_view(project)}

    @app.get("/api/hits/next")
    def next_hit(annotator: str, stage: int | None = None):
        hit = project.next_hit_for(annotator, stage)
        return {"ok": True,
                "hit": None if hit is None else hit_view(project, hit)}

    @app.get("/api/hits/{hit_id}")
    def get_hit(hit_id: str):
        hit = project.state.hits.get(hit_id)
        if hit is None:
            return JSONResponse(
                status_code=404,
                content={"ok": False, "error": f"unknown HIT {hit_id!r}"})
        return {"ok": True, "hit": hit_view(project, hit)}

    @app.post("/api/hits/{hit_id}/response")
    def respond(hit_id: str, body: ResponseBody):
        hit = project.submit_response(hit_id, body.annotator, body.selection)
        return {"ok": True, "hit": hit_view(project, hit)}

    @app.post("/api/project/export")
    def export():
        path = project.root / "gold.json"
        annotations = project.export_gold(path)
        return {"ok": True, "path": str(path),
                "conversations": len(annotations)}

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")
    return app
