"""Shared fixtures: event builders, a brute-force chain-match oracle, and
random stream/query generators used by the oracle-equivalence suites."""

from __future__ import annotations

import itertools
import random

from saql.events import Entity, EntityKind, Event, Operation
from saql.language import ast
from saql.matching import compile_globals, compile_pattern

_EID = itertools.count(1)


def proc(exe, pid=100, **extra):
    return Entity(EntityKind.PROCESS, {"pid": pid, "exe_name": exe, **extra})


def file_(name, **extra):
    return Entity(EntityKind.FILE, {"name": name, **extra})


def conn(dstip, srcip="10.0.0.9", srcport=5000, dstport=443, protocol="tcp"):
    return Entity(EntityKind.CONNECTION, {
        "srcip": srcip, "dstip": dstip, "srcport": srcport,
        "dstport": dstport, "protocol": protocol})


def ev(subject, op, obj, ts=0, agent="host1", amount=None, te=None, eid=None):
    return Event(eid=eid or f"e{next(_EID):06d}", agentid=agent, ts=ts,
                 te=te if te is not None else ts, subject=subject,
                 op=Operation(op), object=obj, amount=amount)


def sort_stream(events):
    return sorted(events, key=lambda e: (e.ts, e.eid))


def brute_force_bindings(query: ast.Query, events) -> set:
    """Reference enumerator: every strictly (ts, eid)-ascending assignment
    of stream events to the chain's patterns, keeping those in which each
    event satisfies its pattern plus globals and all occurrences of a
    shared entity variable bind the same entity.

    Returns a set of binding keys: tuples of (alias, eid) pairs.
    """
    stream = sort_stream(events)
    admits = compile_globals(query.globals)
    stream = [e for e in stream if admits(e)]
    chain_aliases = query.chain if query.chain is not None \
        else [p.alias for p in query.patterns]
    chain = [compile_pattern(query.pattern_by_alias(a)) for a in chain_aliases]
    candidates = [[i for i, e in enumerate(stream) if cp.predicate(e)]
                  for cp in chain]

    results = set()

    def extend(pos, start, entities, acc):
        if pos == len(chain):
            results.add(tuple(sorted(acc)))
            return
        cp = chain[pos]
        for i in candidates[pos]:
            if i < start:
                continue
            e = stream[i]
            subj, obj = e.subject.identity, e.object.identity
            if entities.get(cp.subject_var, subj) != subj:
                continue
            if cp.subject_var == cp.object_var:
                if subj != obj:
                    continue
            elif entities.get(cp.object_var, obj) != obj:
                continue
            nxt = dict(entities)
            nxt[cp.subject_var] = subj
            nxt[cp.object_var] = obj
            extend(pos + 1, i + 1, nxt, acc + [(cp.alias, e.eid)])

    extend(0, 0, {}, [])
    return results


# --- randomized oracle cases -------------------------------------------------

_EXES = ["osql.exe", "sbblv.exe", "cmd.exe", "svchost.exe"]
_FILES = ["C:\\a.dmp", "C:\\b.dmp", "C:\\c.txt"]
_IPS = ["172.16.8.129", "10.0.0.5", "10.0.0.6"]
_AGENTS = ["db01", "ws07"]


def random_query(rng: random.Random) -> ast.Query:
    from saql.language import parse

    length = rng.randint(1, 4)
    proc_vars = [f"p{i}" for i in range(length + 1)]
    file_vars = [f"f{i}" for i in range(2)]
    ip_vars = [f"i{i}" for i in range(2)]
    lines = []
    if rng.random() < 0.3:
        lines.append(f'agentid = "{rng.choice(_AGENTS)}"')
    aliases = []
    used_subjects = []
    for k in range(length):
        subject = rng.choice(proc_vars[:length])
        used_subjects.append(subject)
        scons = f'["%{rng.choice(_EXES)[:4]}%"]' if rng.random() < 0.5 else ""
        shape = rng.choice(["proc", "file", "ip"])
        if shape == "proc":
            op = rng.choice(["start", "end", "execute"])
            ovar = rng.choice(proc_vars)
            ocons = f'["{rng.choice(_EXES)}"]' if rng.random() < 0.4 else ""
        elif shape == "file":
            op = rng.choice(["read", "write", "delete"])
            ovar = rng.choice(file_vars)
            ocons = f'["{rng.choice(_FILES[:2])}"]'.replace("\\", "\\\\") \
                if rng.random() < 0.4 else ""
        else:
            op = rng.choice(["read", "write"])
            ovar = rng.choice(ip_vars)
            ocons = f'[dstip = "{rng.choice(_IPS)}"]' if rng.random() < 0.4 else ""
        if rng.random() < 0.25 and shape != "proc":
            op = f"{op} || {'write' if op != 'write' else 'read'}"
        alias = f"e{k}"
        aliases.append(alias)
        lines.append(f"proc {subject}{scons} {op} {shape} {ovar}{ocons} as {alias}")
    order = aliases[:]
    rng.shuffle(order)
    lines.append("with " + " -> ".join(order))
    lines.append("return " + ", ".join(sorted(set(used_subjects))))
    return parse("\n".join(lines) + "\n")


def random_stream(rng: random.Random, size: int) -> list:
    events = []
    ts = 1_000_000
    for _ in range(size):
        ts += rng.choice([0, 1, 3, 10, 100])
        subject = proc(rng.choice(_EXES), pid=rng.randint(1, 5))
        shape = rng.random()
        if shape < 0.34:
            obj = proc(rng.choice(_EXES), pid=rng.randint(1, 5))
            op = rng.choice(["start", "end", "execute"])
            amount = None
        elif shape < 0.67:
            obj = file_(rng.choice(_FILES))
            op = rng.choice(["read", "write", "delete"])
            amount = rng.randint(0, 5000) if op != "delete" else None
        else:
            obj = conn(rng.choice(_IPS), dstport=rng.choice([80, 443, 1433]))
            op = rng.choice(["read", "write"])
            amount = rng.randint(0, 5000)
        events.append(ev(subject, op, obj, ts=ts,
                         agent=rng.choice(_AGENTS), amount=amount))
    return events


# --- brute-force DBSCAN reference ---------------------------------------------

def reference_dbscan(points, eps, min_pts):
    """Independent clustering reference: explicit distance matrix, core
    test by neighborhood counting, clusters via union-find over core pairs,
    border points joined to their nearest core (ties by core coordinates).

    Returns (partition: set of frozensets of keys, outliers: set of keys).
    """
    keys = [k for k, _ in points]
    vecs = [tuple(float(x) for x in v) for _, v in points]
    n = len(vecs)
    dist = [[sum((a - b) ** 2 for a, b in zip(vecs[i], vecs[j])) ** 0.5
             for j in range(n)] for i in range(n)]
    core = [sum(1 for j in range(n) if dist[i][j] <= eps) >= min_pts
            for i in range(n)]

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(n):
            if i != j and core[i] and core[j] and dist[i][j] <= eps:
                parent[find(i)] = find(j)

    member = {}  # index -> root of its cluster, or None for outliers
    for i in range(n):
        if core[i]:
            member[i] = find(i)
            continue
        cands = [(dist[i][j], vecs[j], j) for j in range(n)
                 if core[j] and dist[i][j] <= eps]
        member[i] = find(min(cands)[2]) if cands else None

    clusters = {}
    outliers = set()
    for i in range(n):
        if member[i] is None:
            outliers.add(keys[i])
        else:
            clusters.setdefault(member[i], set()).add(keys[i])
    return {frozenset(v) for v in clusters.values()}, outliers
