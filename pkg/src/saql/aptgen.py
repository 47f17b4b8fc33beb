"""Synthetic trace generator: benign enterprise background noise plus a
five-step intrusion (initial compromise, malware infection, privilege
escalation, database-server penetration, data exfiltration) planted so
that each bundled detection query has exactly the footprint it needs.

Everything is derived from one seed; a fixed seed yields a byte-identical
corpus.  `attack=False` emits the same background without the intrusion,
for false-positive checks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator, Optional

from saql.events import Entity, EntityKind, Event, Operation, serialize_event

EPOCH_MS = 1_523_232_000_000  # 2018-04-09T00:00:00Z
MINUTE = 60_000

WS1, WS2, DB = "ws01", "ws02", "db01"
DB_IP = "10.0.0.21"
C2_IP = "172.16.8.101"
EXFIL_IP = "172.16.8.129"
INTERNAL_CLIENTS = ["10.0.0.11", "10.0.0.12", "10.0.0.13",
                    "10.0.0.14", "10.0.0.15", "10.0.0.16"]


@dataclass
class TraceConfig:
    seed: int = 1
    attack: bool = True
    duration_min: int = 90
    epoch_ms: int = EPOCH_MS


class _Builder:
    def __init__(self, config: TraceConfig):
        self.rng = random.Random(config.seed)
        self.config = config
        self.events: list[Event] = []
        self._counters: dict = {}

    def at(self, minute: float, second: float = 0.0) -> int:
        return self.config.epoch_ms + int((minute * 60 + second) * 1000)

    def emit(self, agent: str, ts: int, subject: Entity, op: str, obj: Entity,
             amount: Optional[int] = None):
        n = self._counters.get(agent, 0) + 1
        self._counters[agent] = n
        self.events.append(Event(
            eid=f"{agent}-{n:08d}", agentid=agent, ts=ts, te=ts + 1,
            subject=subject, op=Operation(op), object=obj, amount=amount))

    def proc(self, exe: str, pid: int, user: str = "system") -> Entity:
        return Entity(EntityKind.PROCESS, {"pid": pid, "exe_name": exe, "user": user})

    def file(self, name: str) -> Entity:
        return Entity(EntityKind.FILE, {"name": name})

    def ip(self, dstip: str, dstport: int = 443, srcip: str = "10.0.0.2",
           srcport: Optional[int] = None) -> Entity:
        return Entity(EntityKind.CONNECTION, {
            "srcip": srcip, "dstip": dstip,
            "srcport": srcport if srcport is not None else self.rng.randint(40000, 60000),
            "dstport": dstport, "protocol": "tcp"})


def _background(b: _Builder):
    cfg = b.config
    end_min = cfg.duration_min
    outlook = b.proc("outlook.exe", 310, "alice")
    chrome1 = b.proc("chrome.exe", 320, "alice")
    excel = b.proc("excel.exe", 330, "alice")
    explorer = b.proc("explorer.exe", 300, "alice")
    chrome2 = b.proc("chrome.exe", 420, "bob")
    svchost2 = b.proc("svchost.exe", 410)
    sqlservr = b.proc("sqlservr.exe", 510, "mssql")
    svchostdb = b.proc("svchost.exe", 520)

    # ws01: mail client sync + browsing + shell activity
    t = 10.0
    while t < end_min * 60:
        b.emit(WS1, b.at(0, t), outlook, "write",
               b.file("C:\\Users\\alice\\AppData\\mail.ost"),
               amount=b.rng.randint(500, 2000))
        if b.rng.random() < 0.5:
            b.emit(WS1, b.at(0, t + 2), outlook, "read",
                   b.ip("10.0.0.30", 993, srcip="10.0.0.2"),
                   amount=b.rng.randint(800, 4000))
        t += 20 + b.rng.uniform(-3, 3)
    t = 5.0
    while t < end_min * 60:
        b.emit(WS1, b.at(0, t), chrome1, b.rng.choice(["read", "write"]),
               b.ip(b.rng.choice(["10.0.0.40", "10.0.0.41"]), 443, srcip="10.0.0.2"),
               amount=b.rng.randint(200, 5000))
        t += 7 + b.rng.uniform(-2, 2)
    t = 15.0
    while t < end_min * 60:
        b.emit(WS1, b.at(0, t), explorer, "read",
               b.file(f"C:\\Users\\alice\\Documents\\doc{b.rng.randint(1, 9)}.docx"),
               amount=b.rng.randint(1000, 9000))
        t += 30 + b.rng.uniform(-5, 5)

    # ws01: the spreadsheet app steadily spawns its print helper, so the
    # child-process invariant has something to learn
    t = 60.0
    helper_pid = 4000
    while t < end_min * 60:
        helper_pid += 1
        b.emit(WS1, b.at(0, t), excel, "start",
               b.proc("splwow64.exe", helper_pid, "alice"))
        t += 5 + b.rng.uniform(-1, 2)

    # ws02: browsing and service noise
    t = 8.0
    while t < end_min * 60:
        b.emit(WS2, b.at(0, t), chrome2, b.rng.choice(["read", "write"]),
               b.ip("10.0.0.40", 443, srcip="10.0.0.3"),
               amount=b.rng.randint(200, 5000))
        t += 9 + b.rng.uniform(-2, 2)
    t = 30.0
    while t < end_min * 60:
        b.emit(WS2, b.at(0, t), svchost2, "write",
               b.file("C:\\Windows\\Logs\\svc.log"), amount=b.rng.randint(100, 900))
        t += 45 + b.rng.uniform(-5, 5)

    # db01: the database serves its internal clients at a steady, low rate;
    # per-client window sums land near 10k, far inside one DBSCAN cluster
    t = 20.0
    while t < end_min * 60:
        for k, client in enumerate(INTERNAL_CLIENTS):
            b.emit(DB, b.at(0, t + k), sqlservr, "write",
                   b.ip(client, 1433, srcip=DB_IP),
                   amount=b.rng.randint(420, 580))
        t += 30.0
    t = 40.0
    while t < end_min * 60:
        b.emit(DB, b.at(0, t), svchostdb, "write",
               b.file("C:\\Windows\\Logs\\sys.log"), amount=b.rng.randint(100, 900))
        t += 60.0


def _attack(b: _Builder):
    outlook = b.proc("outlook.exe", 310, "alice")
    excel = b.proc("excel.exe", 330, "alice")
    wscript = b.proc("wscript.exe", 777, "alice")
    gsecdump = b.proc("gsecdump.exe", 778, "alice")
    cmd = b.proc("cmd.exe", 540, "mssql")
    sbblv = b.proc("sbblv.exe", 555, "mssql")
    osql = b.proc("osql.exe", 560, "mssql")
    bcp = b.proc("bcp.exe", 561, "mssql")
    sqlservr = b.proc("sqlservr.exe", 510, "mssql")
    attachment = b.file("C:\\Users\\alice\\Downloads\\invoice.xlsm")
    dump = b.file("C:\\backup1.dmp")

    # c1: initial compromise — the mail client fetches and writes the
    # crafted attachment on the workstation
    b.emit(WS1, b.at(5, 0), outlook, "read", b.ip("10.0.0.30", 993, srcip="10.0.0.2"),
           amount=45_000)
    b.emit(WS1, b.at(5, 2), outlook, "write", attachment, amount=44_032)

    # c2: malware infection — the spreadsheet opens the attachment and
    # spawns a scripting host it has never spawned before, which calls out
    b.emit(WS1, b.at(8, 0), excel, "read", attachment, amount=44_032)
    b.emit(WS1, b.at(8, 2), excel, "start", wscript)
    b.emit(WS1, b.at(8, 5), wscript, "write", b.ip(C2_IP, 443, srcip="10.0.0.2"),
           amount=1_500)

    # c3: privilege escalation — port sweep of the database host, then the
    # credential dumper runs
    for i, port in enumerate([135, 139, 445, 1433, 3389, 5432, 8080, 8443]):
        b.emit(WS1, b.at(12, i * 0.3), wscript, "read",
               b.ip(DB_IP, port, srcip="10.0.0.2"), amount=60)
    b.emit(WS1, b.at(13, 0), wscript, "start", gsecdump)
    b.emit(WS1, b.at(13, 2), gsecdump, "read",
           b.file("C:\\Windows\\System32\\config\\SAM"), amount=65_536)

    # c4: penetration — a shell on the database server drops another
    # stage and starts the implant, which heartbeats to the drop host
    b.emit(DB, b.at(35, 0), cmd, "write", b.file("C:\\Windows\\Temp\\dropper.vbs"),
           amount=2_231)
    b.emit(DB, b.at(36, 0), cmd, "start", sbblv)
    beat = 36 * 60 + 15.0
    while beat < 74 * 60:
        b.emit(DB, b.at(0, beat), sbblv, "write",
               b.ip(EXFIL_IP, 443, srcip=DB_IP), amount=500)
        beat += 60.0

    # c5: exfiltration — the dump is produced, read by the implant, and
    # both the implant and the database stream data to the drop host
    b.emit(DB, b.at(72, 0), cmd, "start", osql)
    b.emit(DB, b.at(72, 10), osql, "start", bcp)
    b.emit(DB, b.at(72, 30), bcp, "write", dump, amount=52_428_800)
    b.emit(DB, b.at(73, 3), sbblv, "read", dump, amount=52_428_800)
    for j in range(8):
        b.emit(DB, b.at(73, 10 + j * 5), sbblv, "write",
               b.ip(EXFIL_IP, 443, srcip=DB_IP), amount=2_000_000)
    for j in range(600):
        b.emit(DB, b.at(72, j * 0.2), sqlservr, "write",
               b.ip(EXFIL_IP, 1433, srcip=DB_IP), amount=4_000)


def generate_apt_trace(seed: int = 1, attack: bool = True,
                       config: Optional[TraceConfig] = None) -> list[Event]:
    """Deterministic demo corpus, sorted by (ts, eid)."""
    cfg = config or TraceConfig(seed=seed, attack=attack)
    b = _Builder(cfg)
    _background(b)
    if cfg.attack:
        _attack(b)
    b.events.sort(key=lambda e: e.order_key)
    return b.events


def trace_lines(events) -> Iterator[str]:
    for e in events:
        yield serialize_event(e)


def generate_uniform_corpus(seed: int, n_events: int,
                            agents: int = 4) -> Iterator[tuple[str, int, str]]:
    """Large flat corpus for throughput runs: (agent, ts, line) triples in
    (ts, eid) order.

    Mix mirrors the demo trace (file, process, network events); rows are
    built as strings directly to keep generation off the measurement's
    critical path.
    """
    rng = random.Random(seed)
    names = [f"h{k:02d}" for k in range(agents)]
    exes = ["chrome.exe", "svchost.exe", "sqlservr.exe", "explorer.exe"]
    ips = ["10.0.0.40", "10.0.0.41", "10.0.0.11", "172.16.8.129"]
    ts = EPOCH_MS
    for n in range(n_events):
        ts += rng.randint(0, 5)
        agent = names[n % agents]
        exe = exes[n % len(exes)]
        pid = 100 + (n % 7)
        shape = n % 3
        if shape == 0:
            obj = f'{{"type":"file","name":"C:\\\\tmp\\\\f{n % 50}.log"}}'
            op, amount = "write", rng.randint(100, 5000)
        elif shape == 1:
            ip = ips[n % len(ips)]
            obj = (f'{{"type":"ip","srcip":"10.0.0.2","dstip":"{ip}",'
                   f'"srcport":{40000 + (n % 1000)},"dstport":443,"protocol":"tcp"}}')
            op, amount = "write", rng.randint(100, 5000)
        else:
            obj = f'{{"type":"proc","pid":{2000 + n % 97},"exe_name":"worker.exe"}}'
            op, amount = "start", None
        amount_part = f',"amount":{amount}' if amount is not None else ""
        yield agent, ts, (
            f'{{"eid":"{agent}-{n:09d}","agentid":"{agent}","ts":{ts},"te":{ts + 1},'
            f'"op":"{op}","subj":{{"type":"proc","pid":{pid},"exe_name":"{exe}"}},'
            f'"obj":{obj}{amount_part}}}')


def write_corpus_to_store(store, corpus) -> int:
    """Stream (agent, ts, line) triples into per-agent day segments."""
    from saql.store import day_of

    writers: dict = {}
    count = 0
    for agent, ts, line in corpus:
        key = (agent, day_of(ts))
        writer = writers.get(key)
        if writer is None:
            writer = store.sorted_writer(*key)
            writers[key] = writer
        writer.write(line, ts)
        count += 1
    for writer in writers.values():
        writer.close()
    return count
