"""System entities and events, plus the newline-delimited JSON wire format.

Every record on the wire is one event per line::

    {"eid":"e1","agentid":"db01","ts":1000,"te":1001,"op":"write",
     "subj":{"type":"proc","pid":4,"exe_name":"osql.exe"},
     "obj":{"type":"file","name":"C:\\backup1.dmp"},"amount":512}

Subjects are always processes; objects are processes, files, or network
connections.  Unknown keys are ignored (counted, not fatal); missing
required attributes or illegal operation/object pairings are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Union

Scalar = Union[str, int]


class EntityKind(str, Enum):
    PROCESS = "process"
    FILE = "file"
    CONNECTION = "connection"


class Operation(str, Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"
    START = "start"
    END = "end"
    RENAME = "rename"
    DELETE = "delete"


class EventType(str, Enum):
    FILE_EVENT = "file_event"
    PROCESS_EVENT = "process_event"
    NETWORK_EVENT = "network_event"


# Wire codes <-> entity kinds.
KIND_CODES = {"proc": EntityKind.PROCESS, "file": EntityKind.FILE, "ip": EntityKind.CONNECTION}
CODE_FOR_KIND = {v: k for k, v in KIND_CODES.items()}

# Legal operations per *object* kind.
ALLOWED_OPS = {
    EntityKind.PROCESS: {Operation.START, Operation.END, Operation.EXECUTE},
    EntityKind.FILE: {Operation.READ, Operation.WRITE, Operation.EXECUTE,
                      Operation.RENAME, Operation.DELETE},
    EntityKind.CONNECTION: {Operation.READ, Operation.WRITE},
}

# The attribute a bare variable shortcut resolves to, per kind.
DEFAULT_ATTR = {
    EntityKind.PROCESS: "exe_name",
    EntityKind.FILE: "name",
    EntityKind.CONNECTION: "dstip",
}

_REQUIRED_ATTRS = {
    EntityKind.PROCESS: {"pid": int, "exe_name": str},
    EntityKind.FILE: {"name": str},
    EntityKind.CONNECTION: {"srcip": str, "dstip": str, "srcport": int,
                            "dstport": int, "protocol": str},
}

_OPTIONAL_ATTRS = {
    EntityKind.PROCESS: ("user", "cmd"),
    EntityKind.FILE: ("owner",),
    EntityKind.CONNECTION: (),
}

_EVENT_TYPE_FOR_OBJECT = {
    EntityKind.FILE: EventType.FILE_EVENT,
    EntityKind.PROCESS: EventType.PROCESS_EVENT,
    EntityKind.CONNECTION: EventType.NETWORK_EVENT,
}


class WireError(Exception):
    """Base class for wire-format failures."""

    def __init__(self, message: str, *, offset: Optional[int] = None,
                 fieldname: Optional[str] = None):
        self.offset = offset
        self.fieldname = fieldname
        detail = message
        if fieldname is not None:
            detail += f" (field {fieldname!r})"
        if offset is not None:
            detail += f" at byte {offset}"
        super().__init__(detail)


class MalformedRecord(WireError):
    """The line is not a syntactically valid record."""


class SchemaViolation(WireError):
    """The record parses but violates the event schema."""


class UnknownAttribute(KeyError):
    def __init__(self, name: str, kind: EntityKind):
        self.name = name
        self.kind = kind
        super().__init__(f"entity kind {kind.value!r} has no attribute {name!r}")


@dataclass
class WireStats:
    """Counters accumulated while parsing a stream of records."""

    records: int = 0
    unknown_keys: int = 0
    malformed: int = 0


@dataclass
class Entity:
    """Immutable by convention once constructed (hot path keeps it unfrozen)."""

    kind: EntityKind
    attrs: dict

    def attr(self, name: str) -> Scalar:
        """Attribute lookup; the pseudo-name "default" resolves per kind."""
        if name == "default":
            name = DEFAULT_ATTR[self.kind]
        try:
            return self.attrs[name]
        except KeyError:
            raise UnknownAttribute(name, self.kind) from None

    def get(self, name: str) -> Optional[Scalar]:
        if name == "default":
            name = DEFAULT_ATTR[self.kind]
        return self.attrs.get(name)

    @property
    def identity(self) -> tuple:
        """Value tuple that identifies "the same" entity across events."""
        if self.kind is EntityKind.PROCESS:
            return (self.attrs["pid"], self.attrs["exe_name"])
        if self.kind is EntityKind.FILE:
            return (self.attrs["name"],)
        return (self.attrs["srcip"], self.attrs["dstip"], self.attrs["srcport"],
                self.attrs["dstport"], self.attrs["protocol"])


@dataclass
class Event:
    """Immutable by convention after construction; safe to share across threads."""

    eid: str
    agentid: str
    ts: int
    te: int
    subject: Entity
    op: Operation
    object: Entity
    amount: Optional[int] = None

    @property
    def order_key(self) -> tuple:
        """Total stream order: start time, then eid for ties."""
        return (self.ts, self.eid)


def attr(entity: Entity, name: str) -> Scalar:
    return entity.attr(name)


def event_type(e: Event) -> EventType:
    return _EVENT_TYPE_FOR_OBJECT[e.object.kind]


_KNOWN_ATTRS = {kind: set(_REQUIRED_ATTRS[kind]) | set(_OPTIONAL_ATTRS[kind])
                for kind in EntityKind}


def _parse_entity(obj: object, where: str, stats: Optional[WireStats]) -> Entity:
    # hot path: type() identity checks instead of isinstance (also excludes
    # bool, which would otherwise satisfy an int check)
    if type(obj) is not dict:
        raise SchemaViolation(f"{where} must be an object", fieldname=where)
    kind = KIND_CODES.get(obj.get("type"))
    if kind is None:
        raise SchemaViolation(f"unknown entity type {obj.get('type')!r}",
                              fieldname=f"{where}.type")
    attrs = dict(obj)
    del attrs["type"]
    for key, value in attrs.items():
        t = type(value)
        if t is not str and t is not int:
            raise SchemaViolation("attribute values must be strings or integers",
                                  fieldname=f"{where}.{key}")
    if stats is not None:
        known = _KNOWN_ATTRS[kind]
        for key in attrs:
            if key not in known:
                stats.unknown_keys += 1
    for name, typ in _REQUIRED_ATTRS[kind].items():
        if type(attrs.get(name)) is not typ:
            detail = "missing required attribute" if name not in attrs \
                else f"attribute must be {typ.__name__}:"
            raise SchemaViolation(f"{detail} {name!r}", fieldname=f"{where}.{name}")
    if kind is EntityKind.CONNECTION:
        if not (0 <= attrs["srcport"] <= 65535 and 0 <= attrs["dstport"] <= 65535):
            raise SchemaViolation("port out of range", fieldname=f"{where}.port")
    return Entity(kind, attrs)


_TOP_KEYS = ("eid", "agentid", "ts", "te", "op", "subj", "obj", "amount")
_OP_LOOKUP = {op.value: op for op in Operation}
_TRANSFER_OPS = (Operation.READ, Operation.WRITE)


def parse_event(line: Union[bytes, str], stats: Optional[WireStats] = None) -> Event:
    """Parse one wire record into a validated Event.

    Raises MalformedRecord for syntax problems (with byte offset) and
    SchemaViolation for records that parse but break an invariant.
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRecord("invalid UTF-8", offset=exc.start) from None
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(exc.msg, offset=exc.pos) from None
    if not isinstance(rec, dict):
        raise MalformedRecord("record must be an object", offset=0)

    if stats is not None:
        stats.records += 1
        for key in rec:
            if key not in _TOP_KEYS:
                stats.unknown_keys += 1

    for name in ("eid", "agentid"):
        value = rec.get(name)
        if type(value) is not str or not value:
            raise SchemaViolation(f"{name} must be a non-empty string", fieldname=name)
    for name in ("ts", "te"):
        if type(rec.get(name)) is not int:
            raise SchemaViolation(f"{name} must be an integer", fieldname=name)
    if rec["te"] < rec["ts"]:
        raise SchemaViolation("te must be >= ts", fieldname="te")

    op = _OP_LOOKUP.get(rec.get("op"))
    if op is None:
        raise SchemaViolation(f"unknown operation {rec.get('op')!r}", fieldname="op")

    subject = _parse_entity(rec.get("subj"), "subj", stats)
    if subject.kind is not EntityKind.PROCESS:
        raise SchemaViolation("subject must be a process", fieldname="subj.type")
    obj = _parse_entity(rec.get("obj"), "obj", stats)
    if op not in ALLOWED_OPS[obj.kind]:
        raise SchemaViolation(
            f"operation {op.value!r} not allowed on {obj.kind.value} objects",
            fieldname="op")

    amount = rec.get("amount")
    if amount is not None:
        if type(amount) is not int or amount < 0:
            raise SchemaViolation("amount must be a non-negative integer", fieldname="amount")
        if op not in _TRANSFER_OPS or obj.kind is EntityKind.PROCESS:
            raise SchemaViolation("amount only valid for read/write on files or connections",
                                  fieldname="amount")

    return Event(eid=rec["eid"], agentid=rec["agentid"], ts=rec["ts"], te=rec["te"],
                 subject=subject, op=op, object=obj, amount=amount)


def _entity_to_wire(entity: Entity) -> dict:
    out: dict = {"type": CODE_FOR_KIND[entity.kind]}
    ordered = list(_REQUIRED_ATTRS[entity.kind]) + list(_OPTIONAL_ATTRS[entity.kind])
    for name in ordered:
        if name in entity.attrs:
            out[name] = entity.attrs[name]
    for name in sorted(entity.attrs):
        if name not in out:
            out[name] = entity.attrs[name]
    return out


def serialize_event(e: Event) -> str:
    """Canonical single-line form; parse(serialize(e)) == e."""
    rec = {
        "eid": e.eid,
        "agentid": e.agentid,
        "ts": e.ts,
        "te": e.te,
        "op": e.op.value,
        "subj": _entity_to_wire(e.subject),
        "obj": _entity_to_wire(e.object),
    }
    if e.amount is not None:
        rec["amount"] = e.amount
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False)


def read_events(lines: Iterator[Union[bytes, str]],
                stats: Optional[WireStats] = None,
                skip_malformed: bool = False) -> Iterator[Event]:
    """Parse a line iterator; optionally count-and-skip bad records."""
    for line in lines:
        if isinstance(line, (bytes, str)) and not line.strip():
            continue
        try:
            yield parse_event(line, stats)
        except WireError:
            if not skip_malformed:
                raise
            if stats is not None:
                stats.malformed += 1
