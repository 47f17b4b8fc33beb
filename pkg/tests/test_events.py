import json

import pytest

from saql.events import (
    Entity,
    EntityKind,
    EventType,
    MalformedRecord,
    Operation,
    SchemaViolation,
    UnknownAttribute,
    WireStats,
    attr,
    event_type,
    parse_event,
    serialize_event,
)

GOOD_LINE = (
    '{"eid":"e1","agentid":"db01","ts":1000,"te":1001,"op":"write",'
    '"subj":{"type":"proc","pid":4,"exe_name":"osql.exe"},'
    '"obj":{"type":"file","name":"C:\\\\backup1.dmp"},"amount":512}'
)


def test_parse_basic_fields():
    e = parse_event(GOOD_LINE)
    assert e.eid == "e1"
    assert e.agentid == "db01"
    assert e.ts == 1000 and e.te == 1001
    assert e.op is Operation.WRITE
    assert e.subject.kind is EntityKind.PROCESS
    assert e.subject.attrs["exe_name"] == "osql.exe"
    assert e.object.attrs["name"] == "C:\\backup1.dmp"
    assert e.amount == 512


def test_parse_accepts_bytes():
    assert parse_event(GOOD_LINE.encode()) == parse_event(GOOD_LINE)


def test_illegal_op_object_pairing():
    rec = json.loads(GOOD_LINE)
    rec["op"] = "start"
    rec["obj"] = {"type": "ip", "srcip": "10.0.0.1", "dstip": "10.0.0.2",
                  "srcport": 1, "dstport": 2, "protocol": "tcp"}
    del rec["amount"]
    with pytest.raises(SchemaViolation) as err:
        parse_event(json.dumps(rec))
    assert err.value.fieldname == "op"


def test_missing_exe_name():
    rec = json.loads(GOOD_LINE)
    del rec["subj"]["exe_name"]
    with pytest.raises(SchemaViolation) as err:
        parse_event(json.dumps(rec))
    assert "exe_name" in err.value.fieldname


def test_malformed_has_offset():
    with pytest.raises(MalformedRecord) as err:
        parse_event('{"eid": }')
    assert err.value.offset is not None


def test_subject_must_be_process():
    rec = json.loads(GOOD_LINE)
    rec["subj"] = {"type": "file", "name": "/x"}
    with pytest.raises(SchemaViolation):
        parse_event(json.dumps(rec))


def test_te_before_ts_rejected():
    rec = json.loads(GOOD_LINE)
    rec["te"] = rec["ts"] - 1
    with pytest.raises(SchemaViolation):
        parse_event(json.dumps(rec))


def test_amount_only_on_read_write_transfers():
    rec = json.loads(GOOD_LINE)
    rec["op"] = "delete"
    with pytest.raises(SchemaViolation) as err:
        parse_event(json.dumps(rec))
    assert err.value.fieldname == "amount"


def test_port_range():
    rec = json.loads(GOOD_LINE)
    rec["obj"] = {"type": "ip", "srcip": "10.0.0.1", "dstip": "10.0.0.2",
                  "srcport": 70000, "dstport": 2, "protocol": "tcp"}
    with pytest.raises(SchemaViolation):
        parse_event(json.dumps(rec))


def test_default_attribute_shortcuts():
    proc = Entity(EntityKind.PROCESS, {"pid": 1, "exe_name": "osql.exe"})
    conn = Entity(EntityKind.CONNECTION, {"srcip": "10.0.0.5", "dstip": "172.16.8.129",
                                          "srcport": 4000, "dstport": 443, "protocol": "tcp"})
    assert attr(proc, "default") == "osql.exe"
    assert attr(conn, "default") == "172.16.8.129"


def test_unknown_attribute():
    f = Entity(EntityKind.FILE, {"name": "/etc/passwd"})
    with pytest.raises(UnknownAttribute):
        attr(f, "owner")


def test_event_type_by_object_kind():
    e = parse_event(GOOD_LINE)
    assert event_type(e) is EventType.FILE_EVENT
    rec = json.loads(GOOD_LINE)
    rec["op"] = "start"
    rec["obj"] = {"type": "proc", "pid": 9, "exe_name": "x.exe"}
    del rec["amount"]
    assert event_type(parse_event(json.dumps(rec))) is EventType.PROCESS_EVENT
    rec["op"] = "write"
    rec["obj"] = {"type": "ip", "srcip": "a", "dstip": "b", "srcport": 1,
                  "dstport": 2, "protocol": "tcp"}
    assert event_type(parse_event(json.dumps(rec))) is EventType.NETWORK_EVENT


def test_serialize_round_trip():
    e = parse_event(GOOD_LINE)
    line = serialize_event(e)
    assert parse_event(line) == e
    # canonical: a second serialize of the reparsed event is identical
    assert serialize_event(parse_event(line)) == line


def test_unknown_keys_counted_not_fatal():
    rec = json.loads(GOOD_LINE)
    rec["color"] = "blue"
    rec["subj"]["nice"] = 1
    stats = WireStats()
    e = parse_event(json.dumps(rec), stats)
    assert stats.unknown_keys == 2
    assert e.subject.attrs["nice"] == 1  # preserved but inert


def test_extra_entity_attrs_survive_round_trip():
    rec = json.loads(GOOD_LINE)
    rec["subj"]["user"] = "alice"
    rec["subj"]["zz"] = 7
    e = parse_event(json.dumps(rec))
    assert parse_event(serialize_event(e)) == e
