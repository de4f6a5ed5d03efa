import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from netdiff.fixtures import FIXTURES, star_graph
from netdiff.graph import RateCase, build_network, compute_reach
from netdiff.rates import (
    EnumerationTooLarge,
    RateError,
    closed_form_rate,
    first_reception_distribution,
    graph_formula,
    oracle_rate,
    rate_from_structure,
    rate_gradient,
    rate_table,
    star_formula,
)

from _support import line
from test_graph import random_networks

QS = [round(0.1 * k, 1) for k in range(1, 10)]


def _rate(net, agent, q, T=4):
    return float(closed_form_rate(net, compute_reach(net, T), agent, q))


def test_dist1_two_ips():
    net = build_network([(0, 2), (1, 2)], 3, {0, 1})
    reach = compute_reach(net, 4)
    assert _rate(net, 2, 0.5) == 0.75
    d1, _ = rate_gradient(net, reach, 2, 0.5)
    assert d1 == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("q", [0.1, 0.37, 0.8])
def test_dist1_single_ip_linear(q):
    net = line(2)
    reach = compute_reach(net, 4)
    assert _rate(net, 1, q) == pytest.approx(q, abs=1e-15)
    d1, d2 = rate_gradient(net, reach, 1, q)
    assert d1 == 1.0 and d2 == 0.0


def test_village_graph_1_second_exchange():
    net = FIXTURES["village_graph_1"].net
    assert _rate(net, 2, 0.5) == pytest.approx(0.25, abs=1e-15)
    assert oracle_rate(net, net.ips, 2, 2, 0.5) == pytest.approx(0.25, abs=1e-15)


def test_diamond_adapted():
    net = FIXTURES["diamond"].net
    assert _rate(net, 4, 0.5) == pytest.approx(0.21875, abs=1e-15)
    assert oracle_rate(net, net.ips, 4, 3, 0.5) == pytest.approx(0.21875, abs=1e-15)


def test_ip_rate_is_one():
    net = line(3)
    reach = compute_reach(net, 4)
    assert _rate(net, 0, 0.3) == 1.0
    assert rate_gradient(net, reach, 0, 0.3) == (0.0, 0.0)


def test_unsupported_has_no_closed_form():
    net = FIXTURES["unsupported"].net
    with pytest.raises(RateError, match="no closed form"):
        _rate(net, 5, 0.5)


def test_out_of_radius_has_no_rate():
    net = line(5)
    with pytest.raises(RateError):
        _rate(net, 4, 0.5)


def test_oracle_single_edge():
    assert oracle_rate(line(2), {0}, 1, 1, 0.3) == pytest.approx(0.3, abs=1e-15)


def test_oracle_star_proof_configuration():
    net, i = star_graph(2, 1)
    assert oracle_rate(net, net.ips, i, 2, 0.5) == pytest.approx(0.4375, abs=1e-15)


def test_oracle_first_reception_not_cumulative():
    # miss at exchange 1, receive at exchange 2
    q = 0.3
    assert oracle_rate(line(3), {0}, 1, 2, q) == pytest.approx((1 - q) * q, abs=1e-15)


def test_village_graph_2_independence():
    net = FIXTURES["village_graph_2"].net
    for q in QS:
        law = first_reception_distribution(net, net.ips, 2, q, (3, 4))
        pi = sum(v for k, v in law.items() if k[0] == 2)
        pj = sum(v for k, v in law.items() if k[1] == 2)
        assert law.get((2, 2), 0.0) == pytest.approx(pi * pj, abs=1e-15)


def test_village_graph_1_dependence():
    net = FIXTURES["village_graph_1"].net
    law = first_reception_distribution(net, net.ips, 2, 0.5, (2, 3))
    joint = law[(2, 2)]
    assert joint == pytest.approx(0.125)  # q * q^2, not 0.25^2
    assert joint > 0.25 * 0.25


def test_oracle_bound():
    net, i = star_graph(4, 4)  # 21 agents within two hops
    with pytest.raises(EnumerationTooLarge, match="21"):
        oracle_rate(net, net.ips, i, 2, 0.5, max_enum=20)
    assert oracle_rate(net, net.ips, i, 2, 0.5, max_enum=21) == pytest.approx(
        star_formula(4, 4, 0.5), abs=1e-12)


def test_oracle_rejects_bad_exchange():
    with pytest.raises(ValueError):
        oracle_rate(line(2), {0}, 1, 4, 0.5)


@pytest.mark.parametrize("omega_i,omega_bar,q,expect", [(1, 1, 0.5, 0.25), (2, 1, 0.5, 0.4375)])
def test_star_formula_values(omega_i, omega_bar, q, expect):
    assert star_formula(omega_i, omega_bar, q) == pytest.approx(expect, abs=1e-15)


def test_star_formula_matches_closed_form():
    net, i = star_graph(3, 2)
    assert star_formula(3, 2, 0.1) == pytest.approx(_rate(net, i, 0.1), abs=1e-12)


def test_star_formula_domain():
    with pytest.raises(ValueError):
        star_formula(0, 1, 0.5)


def _supported_agents():
    for name, fx in FIXTURES.items():
        reach = compute_reach(fx.net, 4)
        for a, r in enumerate(reach.rates):
            if r is not None and r.case not in (RateCase.IP, RateCase.UNSUPPORTED):
                yield name, a


@pytest.mark.parametrize("name,agent", list(_supported_agents()))
def test_gradient_finite_difference(name, agent):
    net = FIXTURES[name].net
    reach = compute_reach(net, 4)
    q, h = 0.37, 1e-5
    d1, d2 = rate_gradient(net, reach, agent, q)
    f = lambda x: float(closed_form_rate(net, reach, agent, x))  # noqa: E731
    fd1 = (f(q + h) - f(q - h)) / (2 * h)
    assert abs(d1 - fd1) <= 1e-6 * abs(fd1)
    g = lambda x: float(rate_gradient(net, reach, agent, x)[0])  # noqa: E731
    fd2 = (g(q + h) - g(q - h)) / (2 * h)
    assert abs(d2 - fd2) <= 1e-6 * max(abs(fd2), 1e-8)


def test_rate_table():
    net = FIXTURES["unsupported"].net
    table = rate_table(net, compute_reach(net, 4), 0.5)
    assert table.rbar[0] == 1.0
    assert np.isnan(table.rbar[5])
    assert table.case[5] == RateCase.UNSUPPORTED


def test_graph_formula_agrees_with_classifier():
    net = FIXTURES["diamond"].net
    assert graph_formula(net, 4, 0.3, "adapted") == pytest.approx(_rate(net, 4, 0.3), abs=1e-15)
    net = FIXTURES["twin_branches"].net
    assert graph_formula(net, 5, 0.3, "tree") == pytest.approx(_rate(net, 5, 0.3), abs=1e-15)


def test_unsupported_both_forms_deviate():
    net = FIXTURES["unsupported"].net
    dev = [max(abs(graph_formula(net, 5, q, form) - oracle_rate(net, net.ips, 5, 3, q))
               for form in ("tree", "adapted")) for q in QS]
    assert any(
        abs(graph_formula(net, 5, q, "tree") - oracle_rate(net, net.ips, 5, 3, q)) > 1e-9
        and abs(graph_formula(net, 5, q, "adapted") - oracle_rate(net, net.ips, 5, 3, q)) > 1e-9
        for q in QS)
    assert max(dev) > 1e-9


# --- brute force over directed-edge transmission indicators ------------------


def directed_edge_oracle(net, agent, t_exchange, q):
    """P(first informed at ``t_exchange``) by summing over every indicator
    I_{ij,t} of every directed edge and exchange."""
    src, dst = np.nonzero(net.adjacency)
    E = len(src)
    K = E * t_exchange
    bits = ((np.arange(2**K)[:, None] >> np.arange(K)[None, :]) & 1).astype(bool)
    weight = np.prod(np.where(bits, q, 1.0 - q), axis=1)
    informed = np.zeros((2**K, net.n_agents), dtype=bool)
    informed[:, sorted(net.ips)] = True
    before = None
    for t in range(t_exchange):
        ind = bits[:, t * E:(t + 1) * E]
        sent = informed[:, src] & ind
        received = np.zeros_like(informed)
        for e in range(E):
            received[:, dst[e]] |= sent[:, e]
        before = informed[:, agent].copy()
        informed = informed | received
    hit = informed[:, agent] & ~before
    return float(np.sum(weight[hit]))


@pytest.mark.parametrize("name", ["chain_ip_i_j", "line4", "village_graph_1", "diamond_two_hop"])
def test_status_oracle_matches_edge_enumeration(name):
    net = FIXTURES[name].net
    reach = compute_reach(net, 4)
    for a in range(net.n_agents):
        d = int(reach.distances[a])
        if not 1 <= d <= 3 or 2 * net.adjacency.sum() // 2 * d > 18:
            continue
        for q in (0.2, 0.5, 0.7):
            assert oracle_rate(net, net.ips, a, d, q) == pytest.approx(
                directed_edge_oracle(net, a, d, q), abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(random_networks(max_n=6), st.sampled_from([0.3, 0.6]))
def test_status_oracle_random_tiny(net, q):
    E = int(net.adjacency.sum())
    reach = compute_reach(net, 4)
    for a in range(net.n_agents):
        d = int(reach.distances[a])
        if 1 <= d <= 3 and E * d <= 16:
            assert oracle_rate(net, net.ips, a, d, q) == pytest.approx(
                directed_edge_oracle(net, a, d, q), abs=1e-13)


# --- properties ---------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(random_networks(max_n=9))
def test_classifier_soundness_against_oracle(net):
    reach = compute_reach(net, 4)
    for a, r in enumerate(reach.rates):
        if r is None or r.case == RateCase.IP:
            continue
        d = int(reach.distances[a])
        try:
            orc = [oracle_rate(net, net.ips, a, d, q, max_enum=12) for q in QS]
        except EnumerationTooLarge:
            assume(False)
        if r.case == RateCase.UNSUPPORTED:
            assert any(min(abs(graph_formula(net, a, q, "tree") - o),
                           abs(graph_formula(net, a, q, "adapted") - o)) > 1e-9
                       for q, o in zip(QS, orc))
        else:
            for q, o in zip(QS, orc):
                assert abs(_rate(net, a, q) - o) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(random_networks())
def test_rate_range_and_monotonicity(net):
    reach = compute_reach(net, 4)
    qs = np.linspace(0.0, 1.0, 51)
    for r in reach.rates:
        if r is None or r.case == RateCase.UNSUPPORTED:
            continue
        val, d1, _ = (np.broadcast_to(x, qs.shape) for x in rate_from_structure(r.case, r.structure, qs))
        assert np.all((val >= 0) & (val <= 1))
        assert np.all(np.diff(val) >= -1e-15)
        assert np.all(d1 >= -1e-12)
        if r.case != RateCase.IP:
            assert val[0] == 0.0
            assert val[-1] == pytest.approx(1.0, abs=1e-15)
