from __future__ import annotations

import json

import pytest

from ark.fuzz import FuzzConfig, fuzz, generate_scenario, run_one
from ark.sim import dumps_record, run

LEGACY_FAILING_SEED = 35  # found by `ark fuzz --mode legacy --iterations 100`


def test_generation_is_a_pure_function_of_seed():
    cfg = FuzzConfig()
    a, b = generate_scenario(cfg, 11), generate_scenario(cfg, 11)
    assert a == b and a.to_json() == b.to_json()
    assert generate_scenario(cfg, 12) != a


@pytest.mark.parametrize("seed", range(20))
def test_generated_scenarios_follow_the_documented_shape(seed):
    cfg = FuzzConfig()
    sc = generate_scenario(cfg, seed)
    chaos_writes = [w for w in sc.writes if w.at < cfg.chaos]
    assert sum(w.wc.is_majority for w in chaos_writes) >= 10
    finals = [w for w in sc.writes if w.at > cfg.chaos]
    assert [w.at - cfg.chaos for w in finals] == list(cfg.final_writes)
    assert all(w.wc.is_majority for w in finals)
    assert sc.horizon == cfg.chaos + cfg.settle
    settle = {f.kind: f for f in sc.faults if f.at == cfg.chaos}
    assert settle["heal"] and settle["restart"].node == "all"
    assert sc.faults[0].kind == "step_up" and sc.faults[0].at == 0
    assert len(sc.config.members) == 5 and sc.config.mode.value == "ark"


def test_config_round_trip_and_validation(tmp_path):
    cfg = FuzzConfig(members=3, mode="legacy", chaos=20_000)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert FuzzConfig.load(p) == cfg
    with pytest.raises(ValueError):
        FuzzConfig.from_dict({"iterations": 3})
    with pytest.raises(ValueError):
        FuzzConfig(mode="raft")
    with pytest.raises(ValueError):
        FuzzConfig(weights={"meteor": 1.0})
    with pytest.raises(ValueError):
        FuzzConfig(final_writes=(50_000,))


def test_small_ark_batch_is_clean():
    rep = fuzz(FuzzConfig(), 25, base_seed=500)
    assert rep.ok, [(o.seed, o.error, o.report.failing_checks()) for o in rep.failures]
    assert rep.totals["elections"] >= 25 and rep.totals["writes_satisfied"] > 0


def test_legacy_violation_is_found_and_replays():
    cfg = FuzzConfig(mode="legacy")
    out = run_one(cfg, LEGACY_FAILING_SEED)
    assert not out.ok and out.report.failing_checks()
    again = run(out.scenario, LEGACY_FAILING_SEED, trace_messages=False)
    rerun = run(generate_scenario(cfg, LEGACY_FAILING_SEED), LEGACY_FAILING_SEED, trace_messages=False)
    assert [dumps_record(r) for r in again.trace] == [dumps_record(r) for r in rerun.trace]


def test_zero_iterations_is_vacuous():
    rep = fuzz(FuzzConfig(), 0)
    assert rep.ok and rep.iterations == 0 and rep.totals == {}
