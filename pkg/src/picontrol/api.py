"""HTTP/1.1 API over the control service.

JSON bodies, UTF-8 throughout. Commands go through POST /v1/commands and
are answered with the command result; domain failures map onto 4xx status
codes carrying {"error": {"type", "message"}} so clients can surface the
domain error name verbatim. GET /v1/events is a server-sent event stream,
one JSON activity event per message, resumable via Last-Event-ID or
?since=. The web console is served statically under /ui when a build is
present.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import HTMLResponse, JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .errors import (
    CorruptState,
    DirectoryUnavailable,
    NotFound,
    PiControlError,
    Unauthorized,
    UnknownCommit,
    UnknownObject,
    UnknownSubject,
)
from .service import Command, ControlService, ingest_peer_commits

# commands the daemon accepts: the published schema the console checks against
COMMAND_SCHEMA = {
    "import_directory": ["endpoint", "trust", "kind?"],
    "discover": ["directory_id"],
    "mirror": ["directory_id"],
    "search": ["query", "kind?", "max_trust?"],
    "advertise": ["object_id", "directory_id", "mode?"],
    "replicate": ["object_id", "to_provider", "source?"],
    "migrate": ["object_id", "destination", "source?", "access?"],
    "localize": ["query", "kind?"],
    "plan_backup": ["object_id", "k?"],
    "plan_deploy": ["object_id"],
    "execute_plan": ["plan_id"],
    "set_trust": ["subject", "level"],
    "share_access": ["resource_id", "grantee", "rights?", "scope?"],
    "revoke_share": ["virtual_id"],
    "propagate_acl": ["acl_id", "providers"],
    "set_acl": ["acl"],
    "add_principal": ["id", "kind?", "members?"],
    "commit": ["object_id", "payload_b64", "message?", "parents?"],
    "rollback": ["object_id", "commit_id"],
    "resolve": ["object_id", "chosen", "discarded"],
    "sync": ["object_id", "peer", "peer_token?"],
    "add_object": ["manifest", "payload_b64?", "payload_path?"],
    "add_provider": ["id", "name?", "trust?", "adapter?", "directory?"],
    "add_contract": ["id", "provider_id", "kind", "properties?", "valid_from?", "valid_to?"],
    "refresh_context": ["providers?", "timeout_s?"],
    "status": [],
}

_STATUS_FOR = {
    Unauthorized: 401,
    NotFound: 404,
    UnknownObject: 404,
    UnknownCommit: 404,
    UnknownSubject: 404,
    DirectoryUnavailable: 502,
    CorruptState: 500,
}


def _status_code(error_type: str) -> int:
    for cls, code in _STATUS_FOR.items():
        if cls.__name__ == error_type:
            return code
    return 409  # domain rule violations


def create_app(service: ControlService, ui_dist: Path | None = None) -> FastAPI:
    app = FastAPI(title="picontrol", version="0.1.0")

    def current_principal(request: Request, token: str | None = Query(default=None)) -> str:
        header = request.headers.get("authorization", "")
        if header.lower().startswith("bearer "):
            token = header[7:].strip()
        principal = service.sessions.principal_for(token)
        if principal is None:
            raise HTTPException(401, detail={"type": "Unauthorized", "message": "login required"})
        request.state.token = token
        return principal

    @app.exception_handler(PiControlError)
    async def domain_error_handler(request: Request, exc: PiControlError):
        name = type(exc).__name__
        return JSONResponse(
            status_code=_status_code(name),
            content={"error": {"type": name, "message": str(exc)}},
        )

    @app.post("/v1/session")
    async def login(body: dict):
        principal = str(body.get("principal", ""))
        try:
            token = service.login(principal)
        except Unauthorized as exc:
            raise HTTPException(401, detail={"type": "Unauthorized", "message": str(exc)})
        return {"token": token, "principal": principal}

    @app.get("/v1/objects")
    async def objects(principal: str = Depends(current_principal)):
        return {"objects": service.objects()}

    @app.get("/v1/directories")
    async def directories(principal: str = Depends(current_principal)):
        return {"directories": service.directories()}

    @app.get("/v1/search")
    async def search(
        q: str = "",
        kind: str | None = None,
        max_trust: int | None = None,
        principal: str = Depends(current_principal),
        request: Request = None,
    ):
        result = service.handle(
            Command("search", {"query": q, "kind": kind, "max_trust": max_trust}, request.state.token)
        )
        return result.result

    @app.post("/v1/commands")
    async def post_command(body: dict, request: Request, principal: str = Depends(current_principal)):
        verb = str(body.get("verb", ""))
        command = Command(
            verb=verb,
            arguments=dict(body.get("arguments") or {}),
            token=request.state.token,
            issuer=body.get("issuer"),
            id=body.get("id"),
        )
        result = await asyncio.to_thread(service.handle, command)
        payload = result.to_dict()
        if not result.ok:
            return JSONResponse(status_code=_status_code(result.error_type), content=payload)
        return payload

    @app.get("/v1/commands/schema")
    async def command_schema():
        return {"commands": COMMAND_SCHEMA}

    @app.get("/v1/plans/{plan_id}")
    async def get_plan(plan_id: str, principal: str = Depends(current_principal)):
        plan = service.plans.get(plan_id)
        if plan is None:
            raise HTTPException(404, detail={"type": "UnknownObject", "message": plan_id})
        return plan.to_dict()

    @app.get("/v1/history")
    async def history(
        subject: str | None = None,
        provider: str | None = None,
        since_seq: int | None = None,
        principal: str = Depends(current_principal),
    ):
        events = service.history(subject=subject, provider=provider, since_seq=since_seq)
        return {"events": [e.to_dict() for e in events]}

    @app.get("/v1/status")
    async def status(principal: str = Depends(current_principal)):
        return service.status()

    @app.get("/v1/events")
    async def events(
        request: Request,
        since: int | None = None,
        follow: bool = True,
        principal: str = Depends(current_principal),
    ):
        """Server-sent events, one JSON activity event per message.

        Replays history after `since` (or the Last-Event-ID header), then
        follows live; follow=false closes after the replay, for polling
        clients and tests."""
        last_header = request.headers.get("last-event-id")
        start_after = since if since is not None else int(last_header) if last_header else 0

        async def stream():
            subscription = service.events.subscribe() if follow else None
            try:
                for event in list(service.events.events):
                    if event.seq > start_after:
                        yield f"id: {event.seq}\ndata: {json.dumps(event.to_dict())}\n\n"
                if subscription is None:
                    return
                replay_top = service.events.events[-1].seq if service.events.events else 0
                while True:
                    if await request.is_disconnected():
                        return
                    item = await asyncio.to_thread(subscription.get, 0.25)
                    if item is None:
                        continue
                    if item.get("gap"):
                        yield f"data: {json.dumps(item)}\n\n"
                    elif item["seq"] > replay_top:
                        yield f"id: {item['seq']}\ndata: {json.dumps(item)}\n\n"
            finally:
                if subscription is not None:
                    service.events.unsubscribe(subscription)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # --- version-store sync wire format ---

    @app.get("/v1/objects/{object_id:path}/commits")
    async def object_commits(object_id: str, principal: str = Depends(current_principal)):
        commits = service.store.reachable_commits(object_id)
        return {
            "object_id": object_id,
            "heads": list(service.store.heads(object_id)),
            "commits": {cid: c.to_dict() for cid, c in commits.items()},
        }

    @app.post("/v1/objects/{object_id:path}/commits")
    async def push_commits(object_id: str, body: dict, principal: str = Depends(current_principal)):
        return ingest_peer_commits(
            service, object_id, dict(body.get("commits") or {}), dict(body.get("blobs") or {})
        )

    @app.get("/v1/blobs/{digest}")
    async def get_blob(digest: str, principal: str = Depends(current_principal)):
        return Response(content=service.store.get_blob(digest), media_type="application/octet-stream")

    # --- console ---

    if ui_dist is None:
        ui_dist = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if ui_dist.is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dist, html=True), name="ui")
    else:
        @app.get("/ui")
        async def ui_placeholder():
            return HTMLResponse(
                "<h1>picontrol</h1><p>No console build found. "
                "Build the frontend (frontend/README) and restart.</p>"
            )

    return app


def serve(service: ControlService, host: str = "127.0.0.1", port: int = 7777) -> None:
    import uvicorn

    uvicorn.run(create_app(service), host=host, port=port, log_level="warning")
