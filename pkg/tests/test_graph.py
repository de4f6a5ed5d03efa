import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiff.fixtures import FIXTURES
from netdiff.graph import (
    UNREACHABLE,
    NetworkError,
    RateCase,
    VillageNetwork,
    build_network,
    classify_rate_case,
    compute_reach,
    partition_types,
)
from netdiff.rates import rate_from_structure

from _support import line


def test_dyad():
    net = build_network([(0, 1)], 2, {0})
    assert net.adjacency.tolist() == [[0, 1], [1, 0]]
    assert net.ips == frozenset({0})


def test_duplicate_edges_idempotent():
    assert build_network([(0, 1), (1, 0)], 2, {0}) == build_network([(0, 1)], 2, {0})


def test_self_loop_rejected():
    with pytest.raises(NetworkError, match="self-loop"):
        build_network([(0, 0)], 1, {0})


@pytest.mark.parametrize("ips", [set(), {5}])
def test_bad_ip_sets(ips):
    with pytest.raises(NetworkError):
        build_network([(0, 1)], 2, ips)


def test_asymmetric_matrix_rejected():
    adj = np.array([[0, 1], [0, 0]], dtype=np.int8)
    with pytest.raises(NetworkError):
        VillageNetwork(0, adj, frozenset({0}))


def test_reach_village_graph_1():
    reach = compute_reach(FIXTURES["village_graph_1"].net, 4)
    assert reach.distances.tolist() == [0, 1, 2, 2]
    assert reach.indicator[1, 1] == 1  # k decides in period 2
    assert reach.indicator[2, 2] == reach.indicator[3, 2] == 1
    assert reach.indicator.sum() == 4


def test_isolated_ip():
    net = build_network([], 3, {0})
    reach = compute_reach(net, 4)
    assert reach.distances[0] == 0 and reach.indicator[0, 0] == 1
    assert not reach.in_radius[1:].any()
    assert reach.counts()["unreachable"] == 2


def test_beyond_horizon():
    reach = compute_reach(line(5), 4)  # IP-a-b-c-e
    assert reach.distances[4] == 4
    assert not reach.in_radius[4]
    assert reach.indicator[4].sum() == 0
    assert reach.counts()["beyond_radius"] == 1


def test_radius_shrinks_with_horizon():
    reach = compute_reach(line(4), 2)
    assert reach.in_radius.tolist() == [True, True, False, False]


def test_horizon_too_short():
    with pytest.raises(ValueError):
        compute_reach(line(2), 1)


def test_classify_cases():
    diamond = FIXTURES["diamond"].net
    assert classify_rate_case(diamond, compute_reach(diamond, 4), 4) == RateCase.DIST3_ADAPTED
    path = line(4)
    assert classify_rate_case(path, compute_reach(path, 4), 3) == RateCase.DIST3_TREE
    bad = FIXTURES["unsupported"].net
    assert classify_rate_case(bad, compute_reach(bad, 4), 5) == RateCase.UNSUPPORTED


def test_classify_out_of_radius():
    net = line(5)
    with pytest.raises(NetworkError):
        classify_rate_case(net, compute_reach(net, 4), 4)


def test_types_dist1_by_ip_count():
    a = build_network([(0, 2), (1, 2)], 3, {0, 1}, village_id=0)  # agent 2: two IP links
    b = build_network([(0, 2), (1, 2), (3, 4)], 5, {0, 1, 3}, village_id=1)
    reaches = [compute_reach(a, 4), compute_reach(b, 4)]
    part = partition_types([a, b], reaches)
    assert part.type_of_agent[0][2] == part.type_of_agent[1][2]
    assert part.type_of_agent[1][2] != part.type_of_agent[1][4]  # one IP link
    assert part.keys[0] == (int(RateCase.IP), ())
    assert part.type_of_agent[0][0] == 1


def test_types_village_graph_1():
    net = FIXTURES["village_graph_1"].net
    part = partition_types([net], [compute_reach(net, 4)])
    assert part.type_of_agent[0][2] == part.type_of_agent[0][3]


def test_type_counts_sum_to_included():
    nets = [f.net for f in FIXTURES.values()]
    reaches = [compute_reach(n, 4) for n in nets]
    part = partition_types(nets, reaches)
    assert sum(part.counts) == sum(int(r.included().sum()) for r in reaches)
    assert all(c > 0 for c in part.counts)


@st.composite
def random_networks(draw, max_n=12):
    n = draw(st.integers(2, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), max_size=2 * n, unique=True))
    ips = draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=3))
    return build_network(edges, n, ips)


@settings(max_examples=60, deadline=None)
@given(random_networks(), st.integers(2, 6))
def test_indicator_rows(net, T):
    reach = compute_reach(net, T)
    rows = reach.indicator.sum(axis=1)
    assert np.array_equal(rows, reach.in_radius.astype(int))
    for i in range(net.n_agents):
        d = reach.distances[i]
        assert (reach.rate_case[i] is None) == (not reach.in_radius[i])
        if reach.in_radius[i]:
            case = reach.rate_case[i]
            expect = {0: {RateCase.IP}, 1: {RateCase.DIST1}, 2: {RateCase.DIST2}}.get(
                int(d), {RateCase.DIST3_TREE, RateCase.DIST3_ADAPTED, RateCase.UNSUPPORTED})
            assert case in expect
        else:
            assert d > min(T - 1, 3) or d == UNREACHABLE


@settings(max_examples=40, deadline=None)
@given(random_networks())
def test_classifier_is_pure(net):
    r1 = compute_reach(net, 4)
    r2 = compute_reach(net, 4)
    assert r1.rate_case == r2.rate_case
    assert [r.key if r else None for r in r1.rates] == [r.key if r else None for r in r2.rates]


@settings(max_examples=40, deadline=None)
@given(st.lists(random_networks(), min_size=1, max_size=3))
def test_type_partition_soundness(nets):
    nets = [VillageNetwork(v, n.adjacency, n.ips) for v, n in enumerate(nets)]
    reaches = [compute_reach(n, 4) for n in nets]
    part = partition_types(nets, reaches)
    qs = np.linspace(0.01, 0.99, 99)
    seen = {}
    for reach, types in zip(reaches, part.type_of_agent):
        for i, m in enumerate(types):
            if m == 0:
                continue
            r = reach.rates[i]
            curve = rate_from_structure(r.case, r.structure, qs)[0]
            if m in seen:
                assert np.array_equal(np.broadcast_to(curve, qs.shape), seen[m])
            else:
                seen[m] = np.broadcast_to(curve, qs.shape)
