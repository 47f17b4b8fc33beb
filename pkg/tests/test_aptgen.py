import hashlib

from saql.aptgen import EXFIL_IP, generate_apt_trace, trace_lines
from saql.demo import demo_queries, demo_query
from saql.language import parse
from saql.runtime import run_query

from helpers import brute_force_bindings


def corpus_hash(events):
    digest = hashlib.sha256()
    for line in trace_lines(events):
        digest.update(line.encode())
        digest.update(b"\n")
    return digest.hexdigest()


def test_fixed_seed_is_byte_identical():
    a = generate_apt_trace(seed=1)
    b = generate_apt_trace(seed=1)
    assert corpus_hash(a) == corpus_hash(b)
    assert corpus_hash(generate_apt_trace(seed=2)) != corpus_hash(a)


def test_trace_is_sorted_with_unique_eids():
    events = generate_apt_trace(seed=1)
    keys = [e.order_key for e in events]
    assert keys == sorted(keys)
    assert len({e.eid for e in events}) == len(events)


def test_background_covers_three_agents():
    events = generate_apt_trace(seed=1, attack=False)
    assert {e.agentid for e in events} == {"ws01", "ws02", "db01"}


def test_exfil_chain_exists_on_db_agent():
    events = generate_apt_trace(seed=1)
    q = parse(demo_query("c5_exfil_chain"))
    bindings = brute_force_bindings(q, events)
    assert len(bindings) >= 1
    eids = {eid for binding in bindings for _, eid in binding}
    assert all(eid.startswith("db01-") for eid in eids)


def test_exfil_window_amounts():
    events = generate_apt_trace(seed=1)
    sums: dict = {}
    for e in events:
        if (e.agentid == "db01" and e.subject.attrs["exe_name"] == "sqlservr.exe"
                and e.object.kind.value == "connection" and e.op.value == "write"):
            dstip = e.object.attrs["dstip"]
            window = e.ts // 600_000
            sums[(window, dstip)] = sums.get((window, dstip), 0) + e.amount
    exfil = {k: v for k, v in sums.items() if k[1] == EXFIL_IP}
    benign = {k: v for k, v in sums.items() if k[1] != EXFIL_IP}
    assert len(exfil) == 1
    assert next(iter(exfil.values())) > 1_000_000
    assert all(v < 100_000 for v in benign.values())


def run_all(events):
    out = {}
    for name, text in demo_queries():
        out[name] = run_query(parse(text), events, qid=name)
    return out


def test_attack_trace_fires_every_demo_query_once_where_expected():
    alerts = run_all(generate_apt_trace(seed=1))
    for rule in ["c1_attachment_drop", "c2_macro_backdoor",
                 "c3_scan_and_creddump", "c4_dropper_on_db", "c5_exfil_chain"]:
        assert len(alerts[rule]) >= 1, rule
    assert len(alerts["invariant_unseen_child"]) == 1
    inv = alerts["invariant_unseen_child"][0]
    assert "wscript.exe" in inv.values[1]
    spike_windows = {a.window for a in alerts["timeseries_net_spike"]}
    assert len(spike_windows) == 1
    outliers = alerts["outlier_dstip_volume"]
    assert len(outliers) == 1
    assert outliers[0].group == (EXFIL_IP,)


def test_benign_trace_is_silent():
    alerts = run_all(generate_apt_trace(seed=1, attack=False))
    assert all(len(v) == 0 for v in alerts.values())
