"""Command-line interface: engine daemon plus thin client verbs.

Every command prints machine-readable output (one JSON object per line);
pass --pretty for an indented human view.  Client verbs talk to a running
daemon over its HTTP API (--server, or the SAQL_SERVER environment
variable, defaulting to http://127.0.0.1:8787).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

DEFAULT_SERVER = "http://127.0.0.1:8787"


def _emit(obj, pretty: bool):
    if pretty:
        print(json.dumps(obj, indent=2, sort_keys=False))
    else:
        print(json.dumps(obj, separators=(",", ":")))


def _server(args) -> str:
    return args.server or os.environ.get("SAQL_SERVER", DEFAULT_SERVER)


def cmd_serve(args):
    import uvicorn

    from saql.service import EngineCore, create_app
    from saql.store import EventStore

    store = EventStore(args.store) if args.store else None
    core = EngineCore(store=store, share_streams=not args.no_share)
    console = args.console if args.console and os.path.isdir(args.console) else None
    app = create_app(core, console_dir=console)
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


def cmd_submit(args):
    import requests

    text = open(args.file, encoding="utf-8").read()
    r = requests.post(f"{_server(args)}/api/queries", data=text.encode("utf-8"),
                      headers={"Content-Type": "text/plain"})
    _emit(r.json(), args.pretty)
    return 0 if r.ok and r.json().get("status") == "running" else 1


def cmd_list(args):
    import requests

    for handle in requests.get(f"{_server(args)}/api/queries").json():
        _emit(handle, args.pretty)


def cmd_stop(args):
    import requests

    r = requests.delete(f"{_server(args)}/api/queries/{args.id}")
    _emit(r.json(), args.pretty)
    return 0 if r.ok else 1


def cmd_alerts(args):
    import requests

    url = (f"{_server(args)}/api/alerts/stream?since={args.since}"
           f"&follow={1 if args.follow else 0}")
    with requests.get(url, stream=True) as r:
        cursor = None
        for raw in r.iter_lines(decode_unicode=True):
            if raw is None or raw.startswith(":"):
                continue
            if raw.startswith("id:"):
                cursor = int(raw[3:].strip())
            elif raw.startswith("event: gap"):
                _emit({"gap": True}, args.pretty)
            elif raw.startswith("data:"):
                alert = json.loads(raw[5:].strip())
                if cursor is not None:
                    alert = {"cursor": cursor, **alert}
                _emit(alert, args.pretty)


def cmd_replay(args):
    import requests

    spec = {"agents": [a for a in (args.agents or "").split(",") if a],
            "speed": args.speed}
    if args.t_from is not None:
        spec["t_start"] = args.t_from
    if args.t_to is not None:
        spec["t_end"] = args.t_to
    r = requests.post(f"{_server(args)}/api/replay", json=spec)
    _emit(r.json(), args.pretty)
    return 0 if r.ok else 1


def cmd_replay_status(args):
    import requests

    _emit(requests.get(f"{_server(args)}/api/replay/status").json(), args.pretty)


def cmd_gen_apt(args):
    from saql.aptgen import generate_apt_trace, trace_lines
    from saql.store import EventStore

    events = generate_apt_trace(seed=args.seed, attack=not args.benign)
    store = EventStore(args.out)
    stats = store.ingest(trace_lines(events))
    _emit({"seed": args.seed, "attack": not args.benign, "events": stats.stored,
           "partitions": stats.partitions, "out": args.out}, args.pretty)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saql", description="stream anomaly query engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, server=True):
        p.add_argument("--pretty", action="store_true",
                       help="indent output for humans")
        if server:
            p.add_argument("--server", default=None,
                           help=f"engine address (default {DEFAULT_SERVER})")

    p = sub.add_parser("serve", help="run the engine daemon")
    p.add_argument("--store", required=True, help="event store directory")
    p.add_argument("--listen", default="127.0.0.1:8787", help="host:port")
    p.add_argument("--console", default=None,
                   help="directory with the built web console")
    p.add_argument("--no-share", action="store_true",
                   help="disable master/dependent stream sharing")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("submit", help="submit a query file")
    p.add_argument("file", metavar="FILE.saql")
    common(p)
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("list", help="list queries")
    common(p)
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("stop", help="stop a query")
    p.add_argument("id")
    common(p)
    p.set_defaults(func=cmd_stop)

    p = sub.add_parser("alerts", help="read the alert feed")
    p.add_argument("--follow", action="store_true")
    p.add_argument("--since", type=int, default=0, metavar="CURSOR")
    common(p)
    p.set_defaults(func=cmd_alerts)

    p = sub.add_parser("replay", help="start a replay session")
    p.add_argument("--agents", default="", help="comma-separated agent ids")
    p.add_argument("--from", dest="t_from", type=int, default=None, metavar="TS")
    p.add_argument("--to", dest="t_to", type=int, default=None, metavar="TS")
    p.add_argument("--speed", type=float, default=0.0, metavar="F")
    common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("replay-status", help="poll the active replay session")
    common(p)
    p.set_defaults(func=cmd_replay_status)

    p = sub.add_parser("gen-apt", help="generate the demo trace into a store")
    p.add_argument("--seed", type=int, default=1, metavar="N")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--benign", action="store_true",
                   help="background noise only, no attack steps")
    common(p, server=False)
    p.set_defaults(func=cmd_gen_apt)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
