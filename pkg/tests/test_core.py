from __future__ import annotations

import itertools

import pytest
from hypothesis import given, strategies as st

from ark.core import (
    GTID,
    ReplicaSetConfig,
    WriteConcern,
    compare_gtid,
    majority_of,
    write_concern_satisfied,
)

SMALL = [GTID(t, o) for t in range(5) for o in range(5)]


def test_gtid_examples():
    assert compare_gtid(GTID(3, 100), GTID(3, 101)) == -1
    assert compare_gtid(GTID(3, 101), GTID(4, 0)) == -1
    assert compare_gtid(GTID(5, 7), GTID(5, 7)) == 0
    assert GTID(3, 100) < GTID(3, 101) < GTID(4, 0)


def test_compare_is_a_total_order_on_small_domain():
    for a, b in itertools.product(SMALL, repeat=2):
        ab, ba = compare_gtid(a, b), compare_gtid(b, a)
        assert ab == -ba
        assert (ab == 0) == (a == b)
        # oracle: lexicographic order on the pair
        assert ab == ((a.term, a.opid) > (b.term, b.opid)) - ((a.term, a.opid) < (b.term, b.opid))
    for a, b, c in itertools.product(SMALL, repeat=3):
        if compare_gtid(a, b) <= 0 and compare_gtid(b, c) <= 0:
            assert compare_gtid(a, c) <= 0


def test_gtid_parse():
    assert GTID.parse([4, 2]) == GTID(4, 2)
    assert GTID.parse(None) is None
    assert str(GTID(4, 2)) == "<4,2>"
    with pytest.raises(ValueError):
        GTID.parse([-1, 0])
    with pytest.raises(ValueError):
        GTID.parse([0, 2**64])


@pytest.mark.parametrize("n,m", [(5, 3), (1, 1), (4, 3), (2, 2), (7, 4)])
def test_majority_of(n, m):
    assert majority_of(n) == m


def test_majority_of_rejects_empty():
    with pytest.raises(ValueError):
        majority_of(0)


@pytest.mark.parametrize("n", range(1, 8))
def test_majorities_always_intersect(n):
    m = majority_of(n)
    assert m > n / 2
    quorums = [set(c) for c in itertools.combinations(range(n), m)]
    assert all(a & b for a in quorums for b in quorums)


@given(st.integers(min_value=1, max_value=10_000))
def test_majority_is_smallest_strict_majority(n):
    m = majority_of(n)
    assert 2 * m > n and 2 * (m - 1) <= n


def nine_dc() -> ReplicaSetConfig:
    return ReplicaSetConfig.from_dict(
        {"members": [{"id": i, "group": f"DC{i // 3 + 1}"} for i in range(9)]}
    )


def test_write_concern_examples():
    five = ReplicaSetConfig.from_dict({"members": 5})
    maj = WriteConcern.majority()
    assert write_concern_satisfied(maj, {0, 1, 2}, five)
    assert not write_concern_satisfied(maj, {0, 1}, five)
    assert write_concern_satisfied(WriteConcern.tag_minimum({"DC2": 1}), {0, 3}, nine_dc())
    assert not write_concern_satisfied(WriteConcern.tag_minimum({"DC2": 1}), {0, 1, 2}, nine_dc())
    assert write_concern_satisfied(WriteConcern.count(1), {0}, five)
    assert not write_concern_satisfied(WriteConcern.count(2), {0}, five)


def test_tag_minimum_needs_every_group():
    wc = WriteConcern.tag_minimum({"DC2": 1, "DC3": 2})
    assert not write_concern_satisfied(wc, {3, 6}, nine_dc())
    assert write_concern_satisfied(wc, {3, 6, 7}, nine_dc())


def test_write_concern_errors():
    five = ReplicaSetConfig.from_dict({"members": 5})
    with pytest.raises(ValueError):
        write_concern_satisfied(WriteConcern.majority(), {9}, five)
    with pytest.raises(ValueError):
        write_concern_satisfied(WriteConcern.tag_minimum({"DCX": 1}), {0}, nine_dc())
    with pytest.raises(ValueError):
        WriteConcern.count(0)
    with pytest.raises(ValueError):
        WriteConcern.parse("most")


@pytest.mark.parametrize("raw", ["majority", 2, {"DC1": 1, "DC2": 2}])
def test_write_concern_json_round_trip(raw):
    assert WriteConcern.parse(raw).to_json() == raw


def test_config_validation():
    with pytest.raises(ValueError):
        ReplicaSetConfig.from_dict({"members": 0})
    with pytest.raises(ValueError):
        ReplicaSetConfig.from_dict({"members": [{"id": 1}, {"id": 1}]})
    with pytest.raises(ValueError):
        ReplicaSetConfig.from_dict({"members": 3, "election_sleep_min": 500, "election_sleep_max": 500})
    with pytest.raises(ValueError):
        ReplicaSetConfig.from_dict({"members": 3, "bogus": 1})


def test_config_defaults_and_round_trip():
    c = ReplicaSetConfig.from_dict({"members": 5})
    assert c.heartbeat_period + c.heartbeat_timeout == 12_000
    assert (c.election_sleep_min, c.election_sleep_max) == (50, 1050)
    assert c.majority == 3
    assert ReplicaSetConfig.from_dict(c.to_dict()) == c
    g = nine_dc()
    assert g.group_of(4) == "DC2"
    assert ReplicaSetConfig.from_dict(g.to_dict()) == g
