import pytest

from saql.evaluate import (
    ABSENT,
    EvalContext,
    InvariantState,
    eval_expr,
    invariant_post_update,
    invariant_step,
    project_return,
    value_to_json,
)
from saql.language import parse

LISTING2_ALERT = parse(
    "proc p write ip i as e #time(10 min)\n"
    "state[3] ss { avg_amount := avg(e.amount) } group by p\n"
    "alert (ss[0].avg_amount > (ss[0].avg_amount + ss[1].avg_amount + "
    "ss[2].avg_amount) / 3) && (ss[0].avg_amount > 10000)\n"
    "return p\n").alert


def ctx_with_history(values):
    return EvalContext(state=lambda k, f: values.get(k, ABSENT))


def test_moving_average_alert_fires():
    ctx = ctx_with_history({0: 30_000, 1: 100, 2: 200})
    assert eval_expr(LISTING2_ALERT, ctx) is True  # 30000 > 10100 and > 10000


def test_moving_average_alert_under_threshold():
    ctx = ctx_with_history({0: 9_000, 1: 9_000, 2: 9_000})
    assert eval_expr(LISTING2_ALERT, ctx) is False


def test_absent_history_makes_alert_false():
    ctx = ctx_with_history({0: 99_999_999})
    assert eval_expr(LISTING2_ALERT, ctx) is False


def test_set_diff_cardinality():
    q = parse(
        "proc p start proc c as e #time(10 sec)\n"
        "state ss { s := set(c.exe_name) } group by p\n"
        "invariant[1][offline] { a := empty_set a = a union ss.s }\n"
        "alert |ss.s diff a| > 0\nreturn p\n")
    ctx = EvalContext(state=lambda k, f: frozenset({"c", "d"}),
                      invariant=frozenset({"a", "b", "c"}))
    assert eval_expr(q.alert, ctx) is True  # |{d}| == 1


def test_division_by_zero_is_absent_and_false_in_comparison():
    q = parse("proc p write ip i as e #time(10 min)\n"
              "state ss { s := sum(e.amount) } group by p\n"
              "alert ss.s / (ss.s - ss.s) > 0\nreturn p\n")
    ctx = EvalContext(state=lambda k, f: 10)
    assert eval_expr(q.alert, ctx) is False


def test_short_circuit_skips_right_side():
    q = parse("proc p write ip i as e #time(10 min)\n"
              "state ss { s := sum(e.amount) } group by p\n"
              "alert ss.s > 10 && ss.s / 0 > 0\nreturn p\n")
    ctx = EvalContext(state=lambda k, f: 5)
    assert eval_expr(q.alert, ctx) is False


INV_QUERY = parse(
    "proc p start proc c as e #time(10 sec)\n"
    "state ss { s := set(c.exe_name) } group by p\n"
    "invariant[2][offline] { a := empty_set a = a union ss.s }\n"
    "alert |ss.s diff a| > 0\nreturn p\n")

INV_ONLINE = parse(INV_QUERY and (
    "proc p start proc c as e #time(10 sec)\n"
    "state ss { s := set(c.exe_name) } group by p\n"
    "invariant[2][online] { a := empty_set a = a union ss.s }\n"
    "alert |ss.s diff a| > 0\nreturn p\n"))


def window_ctx(s):
    return EvalContext(state=lambda k, f: frozenset(s))


def test_invariant_training_fold():
    inv = InvariantState.fresh(INV_QUERY.invariant)
    assert invariant_step(inv, INV_QUERY.invariant, [window_ctx({"a", "b"})]) is False
    assert invariant_step(inv, INV_QUERY.invariant, [window_ctx({"b", "c"})]) is False
    assert inv.value == frozenset({"a", "b", "c"})
    assert inv.trained


def test_offline_invariant_frozen_after_training():
    inv = InvariantState.fresh(INV_QUERY.invariant)
    invariant_step(inv, INV_QUERY.invariant, [window_ctx({"a", "b"})])
    invariant_step(inv, INV_QUERY.invariant, [window_ctx({"b", "c"})])
    ctx = window_ctx({"c", "d"})
    assert invariant_step(inv, INV_QUERY.invariant, [ctx]) is True
    ctx.invariant = inv.value
    assert eval_expr(INV_QUERY.alert, ctx) is True  # unseen child "d"
    invariant_post_update(inv, INV_QUERY.invariant, [ctx])
    assert inv.value == frozenset({"a", "b", "c"})  # offline: unchanged


def test_online_invariant_updates_after_alerts():
    inv = InvariantState.fresh(INV_ONLINE.invariant)
    invariant_step(inv, INV_ONLINE.invariant, [window_ctx({"a", "b"})])
    invariant_step(inv, INV_ONLINE.invariant, [window_ctx({"b", "c"})])
    ctx = window_ctx({"c", "d"})
    assert invariant_step(inv, INV_ONLINE.invariant, [ctx]) is True
    ctx.invariant = inv.value
    assert eval_expr(INV_ONLINE.alert, ctx) is True
    invariant_post_update(inv, INV_ONLINE.invariant, [ctx])
    assert inv.value == frozenset({"a", "b", "c", "d"})


def test_training_counts_empty_windows():
    inv = InvariantState.fresh(INV_QUERY.invariant)
    invariant_step(inv, INV_QUERY.invariant, [])  # empty window still trains
    invariant_step(inv, INV_QUERY.invariant, [window_ctx({"x"})])
    assert inv.trained
    assert inv.value == frozenset({"x"})


def test_invariant_union_never_shrinks_during_training():
    inv = InvariantState.fresh(INV_QUERY.invariant)
    sizes = []
    for s in [{"a"}, {"b"}]:
        invariant_step(inv, INV_QUERY.invariant, [window_ctx(s)])
        sizes.append(len(inv.value))
    assert sizes == sorted(sizes)


def test_project_return_and_json():
    values = project_return(["x", "y"], {"x": "sqlservr.exe", "y": 2_000_000}.get)
    assert values == ("sqlservr.exe", 2_000_000)
    assert value_to_json(frozenset({"b", "a"})) == ["a", "b"]
    assert value_to_json(ABSENT) is None


def test_comparison_with_absent_is_false_both_sides():
    q = parse("proc p write ip i as e #time(10 min)\n"
              "state ss { s := sum(e.amount) } group by p\n"
              "alert 10 > ss.s\nreturn p\n")
    ctx = EvalContext(state=lambda k, f: ABSENT)
    assert eval_expr(q.alert, ctx) is False
