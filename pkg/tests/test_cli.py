import gzip
import json
import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from saql.aptgen import generate_apt_trace, trace_lines
from saql.cli import main
from saql.demo import demo_query
from saql.service import EngineCore, create_app
from saql.store import EventStore


def test_gen_apt_writes_store(tmp_path, capsys):
    out = tmp_path / "store"
    assert main(["gen-apt", "--seed", "1", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["events"] > 0
    store = EventStore(out)
    assert store.agents() == ["db01", "ws01", "ws02"]
    seg = next((out / "db01").glob("*.evl.gz"))
    with gzip.open(seg, "rt") as fh:
        first = json.loads(next(fh))
    assert first["agentid"] == "db01"


def test_gen_apt_benign_flag(tmp_path, capsys):
    out = tmp_path / "store"
    main(["gen-apt", "--seed", "1", "--benign", "--out", str(out)])
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["attack"] is False


@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    root = tmp_path_factory.mktemp("store")
    store = EventStore(root)
    store.ingest(trace_lines(generate_apt_trace(seed=1)))
    core = EngineCore(store=store)
    app = create_app(core)
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise TimeoutError("server did not start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)
    core.close()


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, [json.loads(line) for line in
                  capsys.readouterr().out.strip().splitlines() if line]


def test_cli_round_trip_against_live_server(tmp_path, capsys, live_server):
    qfile = tmp_path / "spike.saql"
    qfile.write_text(demo_query("timeseries_net_spike"))
    code, out = run_cli(capsys, "submit", str(qfile), "--server", live_server)
    assert code == 0
    qid = out[0]["id"]
    assert out[0]["status"] == "running"

    code, out = run_cli(capsys, "list", "--server", live_server)
    assert code == 0 and any(h["id"] == qid for h in out)

    code, out = run_cli(capsys, "replay", "--speed", "0",
                        "--server", live_server)
    assert code == 0
    for _ in range(500):
        code, out = run_cli(capsys, "replay-status", "--server", live_server)
        if out[0]["done"]:
            break
        time.sleep(0.02)
    assert out[0]["done"] and out[0]["emitted"] == out[0]["total"]

    code, out = run_cli(capsys, "alerts", "--server", live_server)
    assert code == 0
    assert len(out) == 1  # the exfil spike
    assert out[0]["kind"] == "timeseries"
    assert out[0]["cursor"] == 1

    code, out = run_cli(capsys, "stop", qid, "--server", live_server)
    assert code == 0 and out[0]["status"] == "stopped"


def test_cli_submit_broken_query_exits_nonzero(tmp_path, capsys, live_server):
    qfile = tmp_path / "broken.saql"
    qfile.write_text("proc p read write ip i as e\nreturn p\n")
    code, out = run_cli(capsys, "submit", str(qfile), "--server", live_server)
    assert code == 1
    assert out[0]["status"] == "error"
    assert out[0]["error"]["line"] == 1
