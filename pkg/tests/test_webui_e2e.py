"""Drives the built web client (jsdom) against a live service instance.

Skipped when the frontend has not been built/tested (needs frontend/dist-test
and frontend/node_modules) or when node is unavailable.
"""
import shutil
import socket
import subprocess
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from rxdialog.engine import Engine
from rxdialog.service import create_app

FRONTEND = Path(__file__).resolve().parent.parent / "frontend"


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.mark.skipif(shutil.which("node") is None, reason="node not installed")
@pytest.mark.skipif(not (FRONTEND / "dist-test").is_dir()
                    or not (FRONTEND / "node_modules").is_dir(),
                    reason="frontend not built (run npm install && npm test there)")
def test_webui_drives_live_service(nlu_models, db, schema):
    crf, intent_model = nlu_models
    engine = Engine(schema=schema, db=db, crf=crf, intent_model=intent_model)
    app = create_app(engine)
    port = _free_port()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            pytest.fail("service did not start")
        time.sleep(0.05)
    try:
        result = subprocess.run(
            ["node", "tests/e2e-live.mjs", f"http://127.0.0.1:{port}"],
            cwd=FRONTEND, capture_output=True, text=True, timeout=120,
        )
        assert result.returncode == 0, result.stdout + result.stderr
        assert "e2e-live OK" in result.stdout
    finally:
        server.should_exit = True
        thread.join(timeout=5)
