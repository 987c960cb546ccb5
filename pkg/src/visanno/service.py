"""HTTP service exposing campaigns: claiming, sessions, metrics, export.

All state lives in event-sourced Campaign objects; the service is a thin
authenticated shell. Each campaign is guarded by its own lock (the event log
has a single serialized writer), requests across campaigns run freely.
Restarting the service replays the per-campaign logs from the data directory
and answers identical request sequences identically.
"""
from __future__ import annotations

import os
import threading
import uuid
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, ConfigDict

from . import engine
from .assignment import Assignment
from .campaign import Campaign, CampaignConfig
from .engine import Protocol, question_upper_bound
from .errors import (
    AuthorizationError,
    ConfigurationError,
    HierarchyValidationError,
    IntegrityError,
    NotFoundError,
    VisannoError,
)
from .hierarchy import Hierarchy, hierarchy_from_document, parse_hierarchy, to_document
from .storage import EventLog, ImageRecord, parse_manifest

DATA_DIR_ENV = "VISANNO_DATA_DIR"

_STATUS_BY_CODE = {
    "configuration": 400,
    "hierarchy-parse": 400,
    "hierarchy-invalid": 400,
    "manifest": 400,
    "answer-kind": 400,
    "unauthorized": 401,
    "not-found": 404,
    "state": 409,
    "integrity": 409,
}


class CreateCampaignBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    protocol: str
    campaign_id: Optional[str] = None
    hierarchy: Optional[dict] = None
    hierarchy_path: Optional[str] = None
    images: Optional[list[dict]] = None
    manifest_path: Optional[str] = None
    task_size: int = 50
    replication: int = 3
    escalation_cap: int = 5
    deterministic: bool = False
    claim_timeout_s: Optional[float] = None
    completion_webhook: Optional[str] = None


class RegisterBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None


class AbandonBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task_id: str


class StartSessionBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image_id: str


class AnswerBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    choice: Optional[str] = None


class PostAnswerBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    answer: AnswerBody
    sequence_no: Optional[int] = None


class CampaignHandle:
    """One campaign plus the lock serializing its writes."""

    def __init__(self, campaign: Campaign, webhook: Optional[str] = None):
        self.campaign = campaign
        self.lock = threading.Lock()
        self.webhook = webhook


class ServiceState:
    def __init__(self, data_dir: Optional[str] = None):
        self.data_dir = data_dir
        self.handles: dict[str, CampaignHandle] = {}
        self.registry_lock = threading.Lock()
        if data_dir:
            os.makedirs(data_dir, exist_ok=True)
            for entry in sorted(os.listdir(data_dir)):
                if not entry.endswith(".ndjson"):
                    continue
                log = EventLog.open(os.path.join(data_dir, entry))
                if len(log) == 0:
                    log.close()
                    continue
                campaign = Campaign.from_log(log)
                self.handles[campaign.state.campaign_id] = CampaignHandle(campaign)

    def handle(self, campaign_id: str) -> CampaignHandle:
        found = self.handles.get(campaign_id)
        if found is None:
            raise NotFoundError(f"no campaign {campaign_id!r}")
        return found

    def new_campaign_id(self, deterministic: bool) -> str:
        if deterministic:
            return f"c-{len(self.handles) + 1}"
        return uuid.uuid4().hex[:12]


def _error_response(status: int, code: str, message: str, **extra) -> JSONResponse:
    body = {"code": code, "message": message}
    body.update(extra)
    return JSONResponse(status_code=status, content=body)


def _load_hierarchy(body: CreateCampaignBody) -> Hierarchy:
    if (body.hierarchy is None) == (body.hierarchy_path is None):
        raise ConfigurationError("supply exactly one of hierarchy or hierarchy_path")
    if body.hierarchy is not None:
        return hierarchy_from_document(body.hierarchy)
    if not os.path.exists(body.hierarchy_path):
        raise ConfigurationError(f"hierarchy file not found: {body.hierarchy_path}")
    with open(body.hierarchy_path, "r", encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())


def _load_images(body: CreateCampaignBody) -> list[ImageRecord]:
    if (body.images is None) == (body.manifest_path is None):
        raise ConfigurationError("supply exactly one of images or manifest_path")
    if body.images is not None:
        return [ImageRecord.from_payload(p) for p in body.images]
    if not os.path.exists(body.manifest_path):
        raise ConfigurationError(f"manifest file not found: {body.manifest_path}")
    with open(body.manifest_path, "r", encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def _assignment_payload(assignment: Optional[Assignment]) -> dict:
    if assignment is None:
        return {"assignment": None}
    return {
        "assignment": {
            "task_id": assignment.task_id,
            "annotator_id": assignment.annotator_id,
            "status": assignment.status.value,
            "image_ids": list(assignment.image_ids),
            "pending_image_ids": list(assignment.pending_image_ids),
            "completion_code": assignment.completion_code,
        }
    }


def _session_payload(campaign: Campaign, session) -> dict:
    record = campaign.state.images[session.image_id]
    return {
        "session_id": session.session_id,
        "image_id": session.image_id,
        "image_uri": record.uri,
        "protocol": session.protocol.value,
        "finished": session.finished,
        "question": engine.question_payload(session.pending) if session.pending else None,
        "outcome": engine.outcome_payload(session.outcome) if session.outcome else None,
        "question_count": session.question_count,
        "question_upper_bound": question_upper_bound(campaign.state.hierarchy),
    }


def _campaign_payload(campaign: Campaign) -> dict:
    state = campaign.state
    return {
        "campaign_id": state.campaign_id,
        "protocol": state.config.protocol.value,
        "task_size": state.config.task_size,
        "replication": state.config.replication,
        "escalation_cap": state.config.escalation_cap,
        "images": sum(len(t.image_ids) for t in state.tasks),
        "tasks": len(state.tasks),
        "annotators": len(state.annotators),
        "events": len(campaign.log),
    }


def _redacted_document(h: Hierarchy, protocol: Protocol) -> dict:
    """Hierarchy document as the protocol allows annotators to see it.

    Methods A and B show category names only; the genus/differentia texts
    are part of Method C's prompt design and are withheld elsewhere so the
    protocols stay honest even against a curious client.
    """
    document = to_document(h)
    if protocol is Protocol.METHOD_C:
        return document

    def strip(node: dict) -> dict:
        node = dict(node)
        node["genus"] = ""
        node["differentia"] = ""
        node["children"] = [strip(child) for child in node.get("children", [])]
        return node

    return {"roots": [strip(root) for root in document["roots"]]}


def create_service(data_dir: Optional[str] = None) -> FastAPI:
    """Build the FastAPI app; campaigns persist under ``data_dir`` when set."""
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV) or None
    state = ServiceState(data_dir)
    app = FastAPI(title="visanno", docs_url=None, redoc_url=None)
    app.state.service = state
    # The annotator UI may be served from a different origin than the API.
    # Auth is bearer tokens, never cookies, so a permissive policy is safe.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(VisannoError)
    async def visanno_error(request: Request, exc: VisannoError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        if isinstance(exc, (NotFoundError,)):
            status = 404
        extra = {}
        if isinstance(exc, HierarchyValidationError):
            extra["violations"] = [
                {"code": v.code, "locus": v.locus, "message": v.message}
                for v in exc.violations
            ]
        return _error_response(status, exc.code, str(exc), **extra)

    @app.exception_handler(RequestValidationError)
    async def request_validation_error(request: Request, exc: RequestValidationError):
        loci = [
            {"locus": ".".join(str(part) for part in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return _error_response(422, "validation", "request body failed validation", errors=loci)

    def authed(campaign_id: str, authorization: Optional[str] = Header(default=None)):
        handle = state.handle(campaign_id)
        if not authorization or not authorization.startswith("Bearer "):
            raise AuthorizationError("missing bearer token")
        token = authorization[len("Bearer "):].strip()
        try:
            info = handle.campaign.authenticate(token)
        except NotFoundError:
            raise AuthorizationError("unknown annotator token") from None
        return handle, info

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "campaigns": len(state.handles)}

    @app.post("/api/v1/campaigns", status_code=201)
    def create_campaign(body: CreateCampaignBody):
        hierarchy = _load_hierarchy(body)
        images = _load_images(body)
        try:
            protocol = Protocol(body.protocol)
        except ValueError:
            raise ConfigurationError(
                f"unknown protocol {body.protocol!r} (expected one of "
                f"{[p.value for p in Protocol]})"
            ) from None
        config = CampaignConfig(
            protocol=protocol,
            task_size=body.task_size,
            replication=body.replication,
            escalation_cap=body.escalation_cap,
            deterministic=body.deterministic,
            claim_timeout_s=body.claim_timeout_s,
        )
        with state.registry_lock:
            campaign_id = body.campaign_id or state.new_campaign_id(body.deterministic)
            if campaign_id in state.handles:
                raise IntegrityError(f"campaign {campaign_id!r} already exists")
            log = None
            if state.data_dir:
                path = os.path.join(state.data_dir, f"{campaign_id}.ndjson")
                if os.path.exists(path):
                    raise IntegrityError(f"event log already exists for {campaign_id!r}")
                clock = _counter_clock() if body.deterministic else None
                log = EventLog(path=path, clock=clock)
            elif body.deterministic:
                log = EventLog(clock=_counter_clock())
            campaign = Campaign.create(campaign_id, hierarchy, images, config, log=log)
            state.handles[campaign_id] = CampaignHandle(campaign, webhook=body.completion_webhook)
        return _campaign_payload(campaign)

    @app.get("/api/v1/campaigns/{campaign_id}")
    def get_campaign(campaign_id: str):
        handle = state.handle(campaign_id)
        with handle.lock:
            return _campaign_payload(handle.campaign)

    @app.get("/api/v1/campaigns/{campaign_id}/hierarchy")
    def get_hierarchy(campaign_id: str):
        handle = state.handle(campaign_id)
        with handle.lock:
            campaign = handle.campaign
            return {
                "protocol": campaign.state.config.protocol.value,
                "question_upper_bound": question_upper_bound(campaign.state.hierarchy),
                "hierarchy": _redacted_document(
                    campaign.state.hierarchy, campaign.state.config.protocol
                ),
            }

    @app.post("/api/v1/campaigns/{campaign_id}/annotators", status_code=201)
    def register(campaign_id: str, body: RegisterBody):
        handle = state.handle(campaign_id)
        with handle.lock:
            info = handle.campaign.register_annotator(body.name)
            return {"annotator_id": info.annotator_id, "name": info.name, "token": info.token}

    @app.post("/api/v1/campaigns/{campaign_id}/claims")
    def claim(auth=Depends(authed)):
        handle, info = auth
        with handle.lock:
            assignment = handle.campaign.claim_task(info.annotator_id)
            return _assignment_payload(assignment)

    @app.get("/api/v1/campaigns/{campaign_id}/claims/current")
    def current_claim(auth=Depends(authed)):
        handle, info = auth
        with handle.lock:
            return _assignment_payload(handle.campaign.active_assignment(info.annotator_id))

    @app.post("/api/v1/campaigns/{campaign_id}/claims/abandon")
    def abandon(body: AbandonBody, auth=Depends(authed)):
        handle, info = auth
        with handle.lock:
            assignment = handle.campaign.abandon_task(info.annotator_id, body.task_id)
            return _assignment_payload(assignment)

    @app.post("/api/v1/campaigns/{campaign_id}/sessions", status_code=201)
    def start_session(body: StartSessionBody, auth=Depends(authed)):
        handle, info = auth
        with handle.lock:
            session = handle.campaign.start_session(info.annotator_id, body.image_id)
            return _session_payload(handle.campaign, session)

    @app.get("/api/v1/campaigns/{campaign_id}/sessions/{session_id}")
    def get_session(session_id: str, auth=Depends(authed)):
        handle, info = auth
        with handle.lock:
            session = handle.campaign.get_session(session_id)
            meta = handle.campaign.state.session_meta[session.session_id]
            if meta.annotator_id != info.annotator_id:
                raise AuthorizationError("session belongs to a different annotator")
            return _session_payload(handle.campaign, session)

    @app.post("/api/v1/campaigns/{campaign_id}/sessions/{session_id}/answers")
    def post_answer(session_id: str, body: PostAnswerBody, auth=Depends(authed)):
        handle, info = auth
        with handle.lock:
            campaign = handle.campaign
            session = campaign.get_session(session_id)
            meta = campaign.state.session_meta[session.session_id]
            if meta.annotator_id != info.annotator_id:
                raise AuthorizationError("session belongs to a different annotator")
            answer = engine.answer_from_payload(body.answer.model_dump())
            completed_before = {
                key for key, a in campaign.state.assignments.items() if a.completion_code
            }
            campaign.submit_answer(session_id, answer, sequence_no=body.sequence_no)
            payload = _session_payload(campaign, session)
            completion = None
            assignment = campaign.state.assignments.get(f"{meta.annotator_id}:{meta.task_id}")
            if (
                assignment is not None
                and assignment.completion_code
                and f"{meta.annotator_id}:{meta.task_id}" not in completed_before
            ):
                completion = {
                    "task_id": meta.task_id,
                    "completion_code": assignment.completion_code,
                }
        if completion is not None:
            payload["completion"] = completion
            _notify_completion(handle, campaign.state.campaign_id, meta.annotator_id, completion)
        return payload

    @app.get("/api/v1/campaigns/{campaign_id}/progress")
    def progress(campaign_id: str):
        handle = state.handle(campaign_id)
        with handle.lock:
            return handle.campaign.progress().payload()

    @app.get("/api/v1/campaigns/{campaign_id}/metrics")
    def metrics(campaign_id: str, collapse_unrecognised: bool = False):
        handle = state.handle(campaign_id)
        with handle.lock:
            report = handle.campaign.metrics(collapse_unrecognised)
            return {
                "alpha": report.alpha,
                "alpha_note": report.alpha_note,
                "counts": [
                    {"category": category, "count": count} for category, count in report.counts.rows
                ],
                "progress": report.progress.payload(),
            }

    @app.get("/api/v1/campaigns/{campaign_id}/export")
    def export(campaign_id: str):
        handle = state.handle(campaign_id)
        with handle.lock:
            text = handle.campaign.export()
        return PlainTextResponse(text, media_type="application/x-ndjson")

    @app.get("/api/v1/campaigns/{campaign_id}/events")
    def events(campaign_id: str):
        handle = state.handle(campaign_id)
        with handle.lock:
            text = handle.campaign.log.dump()
        return PlainTextResponse(text, media_type="application/x-ndjson")

    return app


def _counter_clock():
    counter = iter(range(1, 1 << 62))
    return lambda: float(next(counter))


def _notify_completion(handle: CampaignHandle, campaign_id: str, annotator_id: str, completion: dict) -> None:
    """Fire-and-forget webhook with the completion code; failures are ignored."""
    if not handle.webhook:
        return
    try:
        import httpx

        httpx.post(
            handle.webhook,
            json={
                "campaign_id": campaign_id,
                "annotator_id": annotator_id,
                **completion,
            },
            timeout=2.0,
        )
    except Exception:
        pass


def run_service(host: str = "127.0.0.1", port: int = 8000, data_dir: Optional[str] = None) -> None:
    import uvicorn

    uvicorn.run(create_service(data_dir), host=host, port=port, log_level="warning")
