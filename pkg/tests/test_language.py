import json
import random
from pathlib import Path

import pytest

from saql.language import (
    SaqlSyntaxError,
    ValidationError,
    parse,
    pretty_print,
)
from saql.language.ast import to_dict
from saql.language.lexer import tokenize

GOLDENS = Path(__file__).parent / "goldens"
LISTINGS = ["listing1", "listing2", "listing3", "listing4"]


def golden_source(name: str) -> str:
    return (GOLDENS / f"{name}.saql").read_text()


@pytest.mark.parametrize("name", LISTINGS)
def test_goldens_parse_to_committed_ast(name):
    q = parse(golden_source(name))
    expected = json.loads((GOLDENS / f"{name}.ast.json").read_text())
    assert to_dict(q) == expected


@pytest.mark.parametrize("name", LISTINGS)
def test_pretty_print_round_trip(name):
    q = parse(golden_source(name))
    assert parse(pretty_print(q)) == q


def test_listing2_shape():
    q = parse(golden_source("listing2"))
    assert q.window.length_ms == 600_000
    assert q.state.depth == 3
    assert [f.name for f in q.state.fields] == ["avg_amount"]
    assert q.state.fields[0].func == "avg"
    assert [(t.base, t.attr) for t in q.state.group_by] == [("p", None)]
    assert q.alert is not None
    assert len(q.returns.items) == 4


def test_listing3_shape():
    q = parse(golden_source("listing3"))
    assert q.window.length_ms == 10_000
    assert q.invariant.train_windows == 10
    assert q.invariant.mode == "offline"
    assert q.kind == "invariant"


def test_listing4_shape():
    q = parse(golden_source("listing4"))
    assert q.cluster.eps == 100_000
    assert q.cluster.min_pts == 5
    assert q.cluster.distance == "ed"
    assert q.kind == "outlier"


def test_one_pattern_slice_of_listing1_round_trips():
    text = ('proc p4 read || write ip i1[dstip="XXX.129"] as evt4\n'
            "with evt4\nreturn distinct p4, i1\n")
    q = parse(text)
    assert parse(pretty_print(q)) == q


def test_state_access_without_state_block():
    text = "proc p read ip i as e\nalert ss.x > 0\nreturn p\n"
    with pytest.raises(ValidationError) as err:
        parse(text)
    assert err.value.line >= 1 and err.value.col >= 1


def test_history_index_out_of_range():
    text = ("proc p write ip i as e #time(10 min)\n"
            "state[2] ss { x := sum(e.amount) } group by p\n"
            "alert ss[2].x > 0\nreturn p\n")
    with pytest.raises(ValidationError) as err:
        parse(text)
    assert "2" in str(err.value)
    assert err.value.line == 3


def test_unknown_alias_in_with():
    text = ("proc p start proc c as e1\n"
            "proc c write file f as e2\n"
            "with e1 -> nope\nreturn p\n")
    with pytest.raises(ValidationError):
        parse(text)


def test_multi_pattern_requires_chain():
    text = ("proc p start proc c as e1\n"
            "proc c write file f as e2\nreturn p\n")
    with pytest.raises(ValidationError):
        parse(text)


def test_cluster_outlier_without_cluster_block():
    text = ("proc p write ip i as e #time(10 min)\n"
            "state ss { amt := sum(e.amount) } group by i.dstip\n"
            "alert cluster.outlier\nreturn i.dstip\n")
    with pytest.raises(ValidationError):
        parse(text)


def test_invariant_and_cluster_are_mutually_exclusive():
    text = ("proc p start proc c as e #time(10 sec)\n"
            "state ss { s := set(c.exe_name) } group by p\n"
            "invariant[2][offline] { a := empty_set a = a union ss.s }\n"
            'cluster(points=all(ss.s), distance="ed", method="DBSCAN(1, 1)")\n'
            "alert |ss.s diff a| > 0\nreturn p\n")
    with pytest.raises(ValidationError):
        parse(text)


def test_arithmetic_on_set_field_rejected():
    text = ("proc p start proc c as e #time(10 sec)\n"
            "state ss { s := set(c.exe_name) } group by p\n"
            "alert ss.s + 1 > 0\nreturn p\n")
    with pytest.raises(ValidationError):
        parse(text)


def test_state_requires_window():
    text = ("proc p write ip i as e\n"
            "state ss { amt := sum(e.amount) } group by p\nreturn p\n")
    with pytest.raises(ValidationError):
        parse(text)


def test_illegal_op_for_object_kind():
    with pytest.raises(ValidationError):
        parse("proc p start file f as e\nreturn p\n")


def test_subject_must_be_proc():
    with pytest.raises(ValidationError):
        parse("file f read file g as e\nreturn f\n")


def test_syntax_error_positions():
    with pytest.raises(SaqlSyntaxError) as err:
        parse("proc p read write ip i as e\nreturn p\n")
    assert err.value.line == 1
    assert err.value.expected


def test_global_constraint_only_agentid():
    with pytest.raises(ValidationError):
        parse('hostname = "x"\nproc p read ip i as e\nreturn p\n')


def test_comment_syntax_ignored():
    q1 = parse("proc p read ip i as e // trailing\nreturn p // more\n")
    q2 = parse("proc p read ip i as e\nreturn p\n")
    assert q1 == q2


def test_error_clause_duplicated():
    with pytest.raises(SaqlSyntaxError):
        parse("proc p read ip i as e\nreturn p\nreturn i\n")


def _mutations():
    """Deterministic corpus of broken queries: deleted tokens + bad indices."""
    rng = random.Random(20180409)
    cases = []
    for name in LISTINGS:
        source = golden_source(name)
        tokens = [t for t in tokenize(source) if t.kind != "EOF"]
        picks = rng.sample(range(len(tokens)), 10)
        for idx in picks:
            tok = tokens[idx]
            lines = source.splitlines(keepends=True)
            line = lines[tok.line - 1]
            lines[tok.line - 1] = line[:tok.col - 1] + line[tok.end_col - 1:]
            cases.append(("del", name, idx, "".join(lines)))
    bad = [
        ("proc p write ip i as e #time(10 min)\n"
         "state[2] ss { x := sum(e.amount) } group by p\n"
         "alert ss[5].x > 0\nreturn p\n"),
        ("proc p write ip i as e #time(0 min)\n"
         "state ss { x := sum(e.amount) } group by p\nreturn p\n"),
        ("proc p start proc c as e #time(10 sec)\n"
         "state ss { s := set(c.exe_name) } group by p\n"
         "invariant[0][offline] { a := empty_set a = a union ss.s }\n"
         "alert |ss.s diff a| > 0\nreturn p\n"),
        ("proc p write ip i as e #time(10 min)\n"
         "state ss { amt := sum(e.amount) } group by i.dstip\n"
         'cluster(points=all(ss.amt), distance="ed", method="DBSCAN(0, 5)")\n'
         "alert cluster.outlier\nreturn i.dstip\n"),
        ("proc p write ip i as e #time(10 min)\n"
         "state ss { amt := sum(e.amount) } group by i.dstip\n"
         'cluster(points=all(ss.amt), distance="xy", method="DBSCAN(1, 5)")\n'
         "alert cluster.outlier\nreturn i.dstip\n"),
        ("proc p write ip i as e #time(10 min)\n"
         "state[3] ss { x := sum(e.amount) } group by p\n"
         "return p, ss[3].x\n"),
        ("proc p write ip i as e #time(10 min)\n"
         "state ss { x := wat(e.amount) } group by p\nreturn p\n"),
        ("proc p write ip i as e #time(10 min)\n"
         "state ss { x := sum(e.amount) } group by q\nreturn p\n"),
        ("proc p read || stop ip i as e\nreturn p\n"),
        ("proc p read ip i[dstport = ] as e\nreturn p\n"),
    ]
    cases.extend(("bad", f"case{i}", i, text) for i, text in enumerate(bad))
    return cases


_MUTATION_CASES = _mutations()


def test_mutation_suite_size():
    assert len(_MUTATION_CASES) == 50


@pytest.mark.parametrize("kind,name,idx,text", _MUTATION_CASES)
def test_mutations_yield_positioned_errors(kind, name, idx, text):
    lines = text.splitlines() or [""]
    try:
        parse(text)
    except (SaqlSyntaxError, ValidationError) as err:
        assert 1 <= err.line <= len(lines) + 1
        assert err.col >= 1
        assert str(err.line) in str(err) and str(err.col) in str(err)
    else:
        pytest.fail("mutated query unexpectedly parsed")
