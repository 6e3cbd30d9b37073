import concurrent.futures
import json
import time

import pytest
from fastapi.testclient import TestClient

from rxdialog.engine import Engine
from rxdialog.metrics import owners_from_events, parse_event_log
from rxdialog.service import EventLogWriter, create_app


@pytest.fixture()
def service(nlu_models, db, schema, tmp_path):
    crf, intent_model = nlu_models
    sink = EventLogWriter(tmp_path / "logs")
    engine = Engine(schema=schema, db=db, crf=crf, intent_model=intent_model,
                    policy="rule", event_sink=sink)
    app = create_app(engine)
    client = TestClient(app)
    return client, sink


def _create(client) -> str:
    resp = client.post("/sessions", json={"participant_id": "p-test"})
    assert resp.status_code == 201
    return resp.json()["session_id"]


def test_healthz_fast(service):
    client, _ = service
    t0 = time.perf_counter()
    resp = client.get("/healthz")
    elapsed = time.perf_counter() - t0
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}
    assert elapsed < 0.1


def test_create_session(service):
    client, _ = service
    sid = _create(client)
    assert sid
    state = client.get(f"/sessions/{sid}/state")
    assert state.status_code == 200
    assert state.json()["terminal"] is False


def test_unknown_session_404(service):
    client, _ = service
    assert client.post("/sessions/nope/utterance", json={"text": "hi"}).status_code == 404
    assert client.get("/sessions/nope/state").status_code == 404


def test_malformed_body_422(service):
    client, _ = service
    sid = _create(client)
    assert client.post(f"/sessions/{sid}/utterance", json={}).status_code == 422
    assert client.post(f"/sessions/{sid}/choice", json={"index": "x"}).status_code == 422
    assert client.post(f"/sessions/{sid}/button", json={"button": "explode"}).status_code == 422


def test_full_flow_over_http(service):
    client, _ = service
    sid = _create(client)
    r1 = client.post(f"/sessions/{sid}/utterance",
                     json={"text": "Ofloxacine 200 mg 2 injections per day"})
    assert r1.status_code == 200
    body = r1.json()
    assert body["response"]["action"] == "request_slot:duration"
    assert body["turn_index"] == 1

    r2 = client.post(f"/sessions/{sid}/utterance", json={"text": "For 7 days"})
    assert r2.json()["response"]["action"] == "propose_summary"

    r3 = client.post(f"/sessions/{sid}/button", json={"button": "confirm"})
    body = r3.json()
    assert body["response"]["action"] == "ack_validated"
    assert body["response"]["terminal"] is True

    state = client.get(f"/sessions/{sid}/state").json()
    assert state["terminal"] is True
    assert state["resolved_ucd"] == "9250332"


def test_terminal_session_409(service):
    client, _ = service
    sid = _create(client)
    client.post(f"/sessions/{sid}/utterance",
                json={"text": "Ofloxacine 200 mg 2 injections per day"})
    client.post(f"/sessions/{sid}/utterance", json={"text": "For 7 days"})
    client.post(f"/sessions/{sid}/button", json={"button": "confirm"})
    resp = client.post(f"/sessions/{sid}/utterance", json={"text": "again"})
    assert resp.status_code == 409


def test_turn_index_strictly_increasing(service):
    client, _ = service
    sid = _create(client)
    indices = []
    for text in ("doliprane 500 mg 2 tablets per day", "for 5 days"):
        resp = client.post(f"/sessions/{sid}/utterance", json={"text": text})
        indices.append(resp.json()["turn_index"])
    assert indices == sorted(set(indices))


def test_choice_path_over_http(service):
    client, _ = service
    sid = _create(client)
    r1 = client.post(f"/sessions/{sid}/utterance",
                     json={"text": "doliprane 500 mg 2 tablets per day"})
    payload = r1.json()["response"]["payload"]
    assert payload["kind"] == "candidates"
    assert len(payload["candidates"]) == 2
    r2 = client.post(f"/sessions/{sid}/choice", json={"index": 0})
    assert r2.json()["response"]["action"] == "request_slot:duration"
    bad = client.post(f"/sessions/{sid}/choice", json={"index": 9})
    assert bad.status_code == 422


def test_event_log_parses_with_zero_rejects(service):
    client, sink = service
    sid = _create(client)
    client.post(f"/sessions/{sid}/utterance",
                json={"text": "Ofloxacine 200 mg 2 injections per day"})
    client.post(f"/sessions/{sid}/utterance", json={"text": "For 7 days"})
    client.post(f"/sessions/{sid}/button", json={"button": "confirm"})
    result = parse_event_log(sink.path_for_today())
    assert result.rejects == []
    assert sid in result.sessions
    owners = owners_from_events(result.sessions)
    assert owners[sid] == "p-test"


def test_concurrent_sessions_no_leakage(service):
    client, sink = service
    scripts = {
        "a": ("Ofloxacine 200 mg 2 injections per day", "9250332"),
        "b": ("celluvisc 1 drop 3 times per day", "9191001"),
    }

    def run(kind):
        text, _ = scripts[kind]
        sid = _create(client)
        client.post(f"/sessions/{sid}/utterance", json={"text": text})
        client.post(f"/sessions/{sid}/utterance", json={"text": "for 7 days"})
        client.post(f"/sessions/{sid}/button", json={"button": "confirm"})
        return kind, sid

    with concurrent.futures.ThreadPoolExecutor(max_workers=16) as pool:
        futures = [pool.submit(run, "a" if i % 2 == 0 else "b") for i in range(16)]
        results = [f.result() for f in futures]

    sids = [sid for _, sid in results]
    assert len(set(sids)) == 16
    for kind, sid in results:
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["resolved_ucd"] == scripts[kind][1]
        assert state["terminal"] is True

    log = parse_event_log(sink.path_for_today())
    assert log.rejects == []
    assert len(log.sessions) == 16
