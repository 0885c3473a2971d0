from __future__ import annotations

import pytest

from conftest import scenario
from ark.scenario import load_scenario
from ark.sim import Simulation, TraceParseError, dumps_record, read_trace, run, write_trace

HEALTHY = dict(
    config={"members": 3},
    horizon=8000,
    faults=[{"at": 0, "step_up": 0}],
    writes=[
        {"at": 1000, "id": "a", "key": "x", "value": "1", "wc": "majority"},
        {"at": 2000, "id": "b", "key": "y", "value": "2", "wc": 3},
    ],
)


def dump(trace):
    return "\n".join(dumps_record(r) for r in trace)


def test_healthy_run_replicates_everywhere():
    res = run(scenario(**HEALTHY), 1)
    assert res.summary() == {
        "elections": 1,
        "writes_satisfied": 2,
        "writes_failed": 0,
        "rollbacks": 0,
        "rolled_back_entries": 0,
    }
    stores = {n: s["store"] for n, s in res.final["nodes"].items()}
    assert stores == {n: {"x": "1", "y": "2"} for n in ("0", "1", "2")}
    assert res.trace[0]["kind"] == "scenario" and res.trace[-1]["kind"] == "final-state"


def test_same_seed_same_trace_different_seed_different_trace():
    sc = load_scenario("problem1")
    a, b, c = run(sc, 3).trace, run(sc, 3).trace, run(sc, 4).trace
    assert dump(a) == dump(b)
    assert dump(a) != dump(c)


def test_causality_and_monotone_time():
    res = run(load_scenario("problem2"), 1)
    times = [r["t"] for r in res.trace]
    assert times == sorted(times)
    sent = {}
    for r in res.trace:
        if r["kind"] == "message-sent":
            sent.setdefault((r["node"], r["to"], dumps_record(r["msg"])), []).append(r["t"])
        elif r["kind"] == "message-delivered":
            key = (r["sender"], r["node"], dumps_record(r["msg"]))
            assert sent.get(key), r
            assert sent[key].pop(0) <= r["t"]


def test_partition_drops_cross_group_messages():
    sc = scenario(config={"members": 3}, horizon=3000, faults=[{"at": 0, "partition": [[0], [1, 2]]}])
    res = run(sc, 1)
    drops = [r for r in res.trace if r["kind"] == "message-dropped"]
    assert drops and all(r["reason"] == "partition" for r in drops)
    assert all({r["node"], r["to"]} & {0} for r in drops)
    assert res.final["partition"] == [[0], [1, 2]]


def test_lossy_link_drops_some_messages():
    sc = scenario(config={"members": 2}, horizon=20_000, faults=[{"at": 0, "drop": [[0, 1]], "probability": 0.5}])
    res = run(sc, 1)
    reasons = [r["reason"] for r in res.trace if r["kind"] == "message-dropped"]
    delivered = [r for r in res.trace if r["kind"] == "message-delivered" and r["sender"] == 0]
    assert reasons and delivered


def test_crash_and_restart_keep_exactly_the_durable_state():
    res = run(load_scenario("crash_restart"), 1)
    crash = next(r for r in res.trace if r["kind"] == "crash")
    before = [r for r in res.trace if r["node"] == 3 and r["t"] <= crash["t"]]
    last_append = [r for r in before if r["kind"] == "append"][-1]
    voted = max(r["max_voted"] for r in before if "max_voted" in r)
    restart = next(r for r in res.trace if r["kind"] == "restart")
    assert restart["max_voted"] == voted == 6
    assert restart["last"] == last_append["gtid"]
    # volatile state is gone: the restarted node starts as a plain secondary
    roles = [r["role"] for r in res.trace if r["kind"] == "role-change" and r["node"] == 3 and r["t"] >= restart["t"]]
    assert "primary" not in roles


def test_write_without_known_primary_is_rejected():
    sc = scenario(config={"members": 3}, horizon=2000, writes=[{"at": 10, "key": "k", "value": "v"}])
    res = run(sc, 1)
    rec = next(r for r in res.trace if r["kind"] == "client-write")
    assert (rec["outcome"], rec["reason"]) == ("rejected", "no primary known")


def test_client_learns_primary_after_discovery_delay():
    data = dict(HEALTHY, writes=[{"at": 150, "key": "k", "value": "v"}, {"at": 400, "key": "k", "value": "w"}])
    res = run(scenario(**data), 1)
    won = next(r["t"] for r in res.trace if r["kind"] == "election-won")
    outcomes = [r["outcome"] for r in res.trace if r["kind"] == "client-write"]
    assert won + 100 > 150 and won + 100 <= 400
    assert outcomes == ["rejected", "accepted"]


def test_crash_primary_with_no_primary_is_skipped():
    sc = scenario(config={"members": 3}, horizon=1000, faults=[{"at": 10, "crash": "primary"}])
    res = run(sc, 1)
    assert any(r["kind"] == "fault-skipped" for r in res.trace)


def test_trace_without_messages_omits_only_message_records():
    sc = scenario(**HEALTHY)
    full = run(sc, 5).trace
    lean = Simulation(sc, 5, trace_messages=False).run().trace
    strip = [r for r in full if not r["kind"].startswith("message-")]
    assert dump(strip[1:-1]) == dump(lean[1:-1])


def test_trace_file_round_trip_and_errors(tmp_path):
    res = run(scenario(**HEALTHY), 1)
    p = tmp_path / "t.jsonl"
    write_trace(p, res.trace)
    assert read_trace(p) == res.trace
    text = p.read_text()
    (tmp_path / "cut.jsonl").write_text(text[: len(text) // 2])
    with pytest.raises(TraceParseError):
        read_trace(tmp_path / "cut.jsonl")
    (tmp_path / "headless.jsonl").write_text("\n".join(text.splitlines()[1:]))
    with pytest.raises(TraceParseError):
        read_trace(tmp_path / "headless.jsonl")
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(TraceParseError):
        read_trace(tmp_path / "empty.jsonl")
