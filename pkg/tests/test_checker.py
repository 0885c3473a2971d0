from __future__ import annotations

from conftest import scenario
from ark.checker import (
    CHECKS,
    check_all,
    check_election_safety,
    check_leader_properties,
    check_log_matching,
    check_no_acked_rollback,
    check_self_consistency,
    check_state_machine_safety,
    check_stepdown_bound,
    check_term_invariants,
)
from ark.scenario import load_scenario
from ark.sim import run


def header(n=3, mode="ark", horizon=100_000):
    sc = scenario(config={"members": n, "mode": mode}, horizon=horizon)
    return {"t": 0, "node": None, "kind": "scenario", "format": 1, "seed": 0, "scenario": sc.to_json()}


def ev(t, node, kind, **kw):
    return {"t": t, "node": node, "kind": kind, **kw}


class Log:
    """Builds append records with correct ``prev`` links per node."""

    def __init__(self):
        self.tail = {}

    def append(self, t, node, g, client, value="v", source=None, max_voted=None, prev="auto"):
        p = self.tail.get(node) if prev == "auto" else prev
        self.tail[node] = list(g)
        return ev(t, node, "append", gtid=list(g), prev=p, op=["set", "x", value], client=client,
                  source=source, max_voted=g[0] if max_voted is None else max_voted)


def won(t, node, term, voters):
    return ev(t, node, "election-won", term=term, voters=voters, last=None)


def role(t, node, r, term=0):
    return ev(t, node, "role-change", role=r, term=term)


def acked(t, node, g, client, wc="majority"):
    return ev(t, node, "wait-completed", gtid=list(g), client=client, wc=wc, status="satisfied")


def rollback(t, node, gtids, clients, prefix_len):
    return ev(t, node, "rollback", removed=[list(g) for g in gtids], clients=clients,
              prefix_len=prefix_len, source=None)


# ---------------------------------------------------------------- election safety


def test_two_wins_in_one_term_is_a_violation():
    v = check_election_safety([header(), won(1, 0, 6, [0, 1]), won(2, 1, 6, [1, 2])])
    assert len(v) == 1 and v[0].property == "election_safety" and len(v[0].events) == 2


def test_increasing_terms_are_fine():
    trace = [header(), won(1, 0, 5, [0, 1]), won(2, 1, 6, [1, 2]), won(3, 2, 7, [2, 0])]
    assert check_election_safety(trace) == []


def test_legacy_overlapping_writing_primaries_reported_informationally():
    L = Log()
    trace = [
        header(mode="legacy"),
        won(1, 0, 1, [0, 1]), role(1, 0, "primary", 1),
        won(2, 1, 1, [1, 2]), role(2, 1, "primary", 1),
        L.append(3, 0, (1, 0), "a"),
        L.append(4, 1, (1, 0), "b"),
    ]
    v = check_election_safety(trace)
    assert len(v) == 1 and v[0].informational
    assert check_all(trace, only=["check_election_safety"]).ok


# ---------------------------------------------------------------- acked rollback


def test_majority_acked_then_rolled_back_is_flagged_once():
    trace = [
        header(),
        acked(5, 0, (1, 3), "w"),
        rollback(9, 1, [(1, 3)], ["w"], 3),
        rollback(9, 2, [(1, 3)], ["w"], 3),
    ]
    v = check_no_acked_rollback(trace)
    assert len(v) == 1 and "w" in v[0].explanation


def test_weak_concern_rollback_is_not_a_violation():
    trace = [header(), acked(5, 0, (1, 3), "w", wc=1), rollback(9, 1, [(1, 3)], ["w"], 3)]
    assert check_no_acked_rollback(trace) == []


def test_rollback_before_ack_or_of_other_write_is_not_flagged():
    trace = [
        header(),
        rollback(4, 1, [(1, 3)], ["w"], 3),
        acked(5, 0, (1, 3), "w"),
        rollback(9, 2, [(1, 3)], ["other"], 3),
    ]
    assert check_no_acked_rollback(trace) == []


# ---------------------------------------------------------------- log matching


def test_same_gtid_different_payload_is_a_violation():
    L = Log()
    trace = [header(), L.append(1, 0, (1, 0), "a", "1"), L.append(2, 1, (1, 0), "a", "2")]
    assert len(check_log_matching(trace)) == 1


def test_same_gtid_different_prefix_is_a_violation():
    L = Log()
    trace = [
        header(),
        L.append(1, 0, (1, 0), "a"),
        L.append(2, 0, (2, 0), "b"),
        L.append(3, 1, (2, 0), "b"),  # same entry but node 1 has no <1,0> below it
    ]
    assert len(check_log_matching(trace)) == 1


def test_divergent_tails_with_distinct_terms_are_fine():
    L = Log()
    trace = [
        header(),
        L.append(1, 0, (1, 0), "a"), L.append(2, 1, (1, 0), "a", source=0),
        L.append(3, 0, (1, 1), "b"), L.append(4, 1, (2, 0), "c"),
    ]
    assert check_log_matching(trace) == []


# ---------------------------------------------------------------- leader properties


def test_rollback_while_primary_violates_append_only():
    trace = [header(), role(1, 0, "primary", 1), rollback(2, 0, [(1, 0)], ["a"], 0)]
    v = check_leader_properties(trace)
    assert [x.property for x in v] == ["leader_append_only"]


def test_new_primary_missing_acked_write_violates_completeness():
    L = Log()
    trace = [
        header(),
        L.append(1, 0, (1, 0), "a"),
        L.append(2, 1, (1, 0), "a", source=0),
        acked(3, 0, (1, 0), "a"),
        won(20, 2, 2, [1, 2]),
    ]
    v = check_leader_properties(trace)
    assert [x.property for x in v] == ["leader_completeness"]
    trace[-1] = won(20, 1, 2, [1, 2])
    assert check_leader_properties(trace) == []


# ---------------------------------------------------------------- state machine safety


def test_applying_past_an_unreverted_divergent_entry_is_a_violation():
    L = Log()
    trace = [
        header(),
        L.append(1, 0, (1, 0), "a"),
        L.append(2, 0, (1, 1), "stale"),
        L.append(3, 0, (2, 0), "new", source=1, prev=[1, 0]),  # source's predecessor is <1,0>
    ]
    v = check_state_machine_safety(trace)
    assert len(v) == 1 and "reverted" in v[0].explanation


def test_healthy_converged_run_is_clean():
    res = run(scenario(config={"members": 3}, horizon=6000, faults=[{"at": 0, "step_up": 0}],
                       writes=[{"at": 1000, "key": "k", "value": "v", "wc": "majority"}]), 1)
    assert check_state_machine_safety(res.trace) == []
    assert check_all(res.trace).ok


def test_crashed_node_is_excluded_from_convergence():
    res = run(scenario(config={"members": 3}, horizon=8000,
                       faults=[{"at": 0, "step_up": 0}, {"at": 500, "crash": 2}],
                       writes=[{"at": 1000, "key": "k", "value": "v", "wc": "majority"}]), 1)
    assert res.final["nodes"]["2"]["store"] == {}
    assert check_state_machine_safety(res.trace) == []


def test_divergent_stores_in_majority_component_are_flagged():
    res = run(scenario(config={"members": 3}, horizon=6000, faults=[{"at": 0, "step_up": 0}],
                       writes=[{"at": 1000, "key": "k", "value": "v", "wc": "majority"}]), 1)
    trace = [r for r in res.trace if not (r["kind"] == "append" and r["node"] == 2)]
    assert check_state_machine_safety(trace)
    assert check_self_consistency(trace)  # the dump no longer matches the replay either


# ---------------------------------------------------------------- step-down bound


def overlap_trace(step_down_after, extra=()):
    return [
        header(),
        won(1_000, 0, 1, [0, 1, 2]), role(1_000, 0, "primary", 1),
        won(20_000, 1, 2, [1, 2]), role(20_000, 1, "primary", 2),
        *extra,
        role(20_000 + step_down_after, 0, "secondary"),
    ]


def test_step_down_inside_bound_is_fine():
    assert check_stepdown_bound(overlap_trace(11_900)) == []
    assert check_stepdown_bound(overlap_trace(12_050)) == []


def test_step_down_past_bound_is_a_violation():
    v = check_stepdown_bound(overlap_trace(13_000))
    assert len(v) == 1 and "12050" in v[0].explanation


def test_isolated_deposed_primary_is_exempt():
    cut = ev(19_000, None, "partition", groups=[[0], [1, 2]])
    trace = overlap_trace(30_000)
    trace.insert(1, cut)
    for r in trace:
        r.setdefault("t", 0)
    assert check_stepdown_bound(trace) == []


def test_fault_inside_window_exempts():
    trace = overlap_trace(13_000, extra=[ev(25_000, None, "heal")])
    trace.sort(key=lambda r: r["t"])
    assert check_stepdown_bound(trace) == []


def test_stepdown_bound_skips_legacy():
    trace = overlap_trace(30_000)
    trace[0] = header(mode="legacy")
    assert check_stepdown_bound(trace) == []


# ---------------------------------------------------------------- term invariants


def vote(t, node, term, vote="yes", max_voted=None):
    return ev(t, node, "vote-cast", candidate=0, term=term, vote=vote, reason="",
              max_voted=term if max_voted is None else max_voted)


def test_term_invariants_catch_each_breach():
    L = Log()
    trace = [
        header(),
        vote(1, 1, 3), vote(2, 1, 3),                                    # two Yes in term 3
        ev(3, 2, "restart", max_voted=1, log_len=0, last=None),         # fine on its own
        vote(4, 2, 4), ev(5, 2, "restart", max_voted=2, log_len=0, last=None),  # went backwards
        ev(6, 1, "ack-advance", gtid=[2, 0], max_voted=3),              # acked an older term
        role(7, 0, "primary", 5), L.append(8, 0, (4, 0), "a"),          # wrong term for primary
    ]
    props = sorted(v.property for v in check_term_invariants(trace))
    assert props == ["ack_rule", "max_voted_monotonic", "primary_term", "single_yes_per_term"]


def test_winners_must_share_an_ordered_voter():
    trace = [
        header(n=5),
        vote(1, 0, 1), vote(1, 1, 1), vote(1, 2, 1), won(2, 0, 1, [0, 1, 2]),
        vote(3, 3, 2), vote(3, 4, 2), vote(3, 2, 2), won(4, 3, 2, [2, 3, 4]),
    ]
    assert check_term_invariants(trace) == []
    bad = trace[:5] + [vote(3, 3, 2), vote(3, 4, 2), won(4, 3, 2, [2, 3, 4])]
    assert [v.property for v in check_term_invariants(bad)] == ["term_order"]


# ---------------------------------------------------------------- whole-trace behaviour


def test_checker_is_pure_and_covers_every_check():
    res = run(load_scenario("problem1").with_mode("legacy"), 1)
    a, b = check_all(res.trace), check_all(res.trace)
    assert a.to_json() == b.to_json()
    assert list(a.found) == list(CHECKS)
    assert "check_no_acked_rollback" in a.failing_checks()


def test_self_consistency_holds_for_simulated_runs():
    for name in ("problem1", "dc_veto", "crash_restart"):
        res = run(load_scenario(name), 2)
        assert check_self_consistency(res.trace) == []
