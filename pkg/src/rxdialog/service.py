"""HTTP session API over the engine (JSON over HTTP/1.1, turn-based).

Endpoints (docs/api.md): POST /sessions, POST /sessions/{id}/utterance,
POST /sessions/{id}/choice, POST /sessions/{id}/button,
GET /sessions/{id}/state, GET /healthz.  Every interaction is appended to a
daily JSON-lines event log; terminal events are fsynced.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .drugdb import ingest, load_fixture_db
from .engine import (
    BadChoiceError,
    Engine,
    PatientStub,
    SystemResponse,
    TerminalSessionError,
    UnknownSessionError,
    button,
    choice,
    utterance,
)
from .nlu import CrfModel, IntentModel
from .policy import TedModel
from .taxonomy import load_default_schema, load_schema

CONFIG_ENV_VAR = "RXD_CONFIG"

TERMINAL_EVENTS = {"prescription_validated", "prescription_cancelled"}


class EventLogWriter:
    """Append-only JSON-lines event log, one file per day."""

    def __init__(self, log_dir):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path_for_today(self) -> Path:
        return self.log_dir / f"events-{time.strftime('%Y%m%d')}.jsonl"

    def __call__(self, event: dict):
        line = json.dumps(event, ensure_ascii=False) + "\n"
        with self._lock:
            with open(self.path_for_today(), "a", encoding="utf-8") as fh:
                fh.write(line)
                if event.get("event_type") in TERMINAL_EVENTS:
                    fh.flush()
                    os.fsync(fh.fileno())


@dataclass
class ServiceConfig:
    schema_path: Optional[str] = None
    db_path: Optional[str] = None
    crf_path: Optional[str] = None
    intent_path: Optional[str] = None
    ted_path: Optional[str] = None
    policy: str = "rule"
    log_dir: str = "logs"
    port: int = 8080
    ui_dir: Optional[str] = None

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(**raw)

    @classmethod
    def resolve(cls, path: Optional[str] = None) -> "ServiceConfig":
        path = path or os.environ.get(CONFIG_ENV_VAR)
        if path:
            return cls.from_file(path)
        return cls()


def build_engine(config: ServiceConfig, event_sink=None) -> Engine:
    schema = load_schema(config.schema_path) if config.schema_path else load_default_schema()
    db = ingest(config.db_path) if config.db_path else load_fixture_db()
    if not config.crf_path or not config.intent_path:
        raise ValueError("service config requires crf_path and intent_path")
    crf = CrfModel.load(config.crf_path)
    intent_model = IntentModel.load(config.intent_path)
    ted_model = TedModel.load(config.ted_path) if config.ted_path else None
    return Engine(schema=schema, db=db, crf=crf, intent_model=intent_model,
                  policy=config.policy, ted_model=ted_model, event_sink=event_sink)


class CreateSessionBody(BaseModel):
    participant_id: str = "anonymous"
    allergy_inns: list[str] = Field(default_factory=list)
    max_daily_dose_overrides: dict[str, tuple[float, str]] = Field(default_factory=dict)


class UtteranceBody(BaseModel):
    text: str


class ChoiceBody(BaseModel):
    index: int


class ButtonBody(BaseModel):
    button: str
    comment_text: str = ""


def _envelope(session_id: str, turn_index: int, response: SystemResponse) -> dict:
    return {
        "session_id": session_id,
        "turn_index": turn_index,
        "response": {
            "action": response.action.name,
            "text": response.text,
            "payload": response.ui_payload,
            "terminal": response.session_terminal,
        },
    }


def create_app(engine: Engine, ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="rxdialog session API", version="1.0")

    def run_step(session_id: str, user_input) -> dict:
        try:
            response = engine.step(session_id, user_input)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session")
        except TerminalSessionError:
            raise HTTPException(status_code=409, detail="session is terminal")
        except BadChoiceError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        turn_index = engine.get_session(session_id).turn_index
        return _envelope(session_id, turn_index, response)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: Optional[CreateSessionBody] = None):
        body = body or CreateSessionBody()
        patient = PatientStub(
            id=body.participant_id,
            allergy_inns=set(body.allergy_inns),
            max_daily_dose_overrides={k: (float(v[0]), v[1])
                                      for k, v in body.max_daily_dose_overrides.items()},
        )
        session_id = engine.start_session(patient)
        return {"session_id": session_id}

    @app.post("/sessions/{session_id}/utterance")
    def post_utterance(session_id: str, body: UtteranceBody):
        return run_step(session_id, utterance(body.text))

    @app.post("/sessions/{session_id}/choice")
    def post_choice(session_id: str, body: ChoiceBody):
        return run_step(session_id, choice(body.index))

    @app.post("/sessions/{session_id}/button")
    def post_button(session_id: str, body: ButtonBody):
        if body.button not in ("confirm", "cancel", "restart", "comment"):
            raise HTTPException(status_code=422, detail=f"unknown button {body.button!r}")
        return run_step(session_id, button(body.button, body.comment_text))

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        try:
            return engine.state_view(session_id)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session")

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def http_api(config: ServiceConfig) -> FastAPI:
    """Engine + event log + FastAPI app, ready for uvicorn."""
    sink = EventLogWriter(config.log_dir)
    engine = build_engine(config, event_sink=sink)
    return create_app(engine, ui_dir=config.ui_dir)
