"""Small bundled networks with known reception structure.

Used by ``netdiff check`` and the test suite.  Agent 0 is an IP unless the
fixture says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import VillageNetwork, build_network


@dataclass(frozen=True)
class Fixture:
    name: str
    net: VillageNetwork
    supported: bool = True
    note: str = ""


def _net(edges, ips, n=None):
    n = n if n is not None else 1 + max(max(e) for e in edges)
    return build_network(edges, n, ips)


def star_graph(omega_i: int, omega_bar: int) -> tuple[VillageNetwork, int]:
    """Homogeneous two-hop star: agent ``i`` has ``omega_i`` neighbours, each
    linked to ``omega_bar`` IPs of its own.  Returns the network and ``i``."""
    i, nxt = 0, 1
    edges, ips = [], []
    for _ in range(omega_i):
        k = nxt
        edges.append((i, k))
        for ip in range(k + 1, k + 1 + omega_bar):
            edges.append((k, ip))
            ips.append(ip)
        nxt = k + 1 + omega_bar
    return build_network(edges, nxt, ips), i


def chain(length: int) -> VillageNetwork:
    """Path 0 - 1 - ... - length with the IP at agent 0."""
    return _net([(a, a + 1) for a in range(length)], [0])


def _build() -> dict[str, Fixture]:
    fx = [
        Fixture("chain_ip_i_j", chain(2), note="IP-i-j"),
        Fixture("line4", chain(3)),
        Fixture("line5_two_ips", _net([(0, 1), (1, 2), (2, 3), (3, 4)], [0, 4])),
        Fixture("village_graph_1", _net([(0, 1), (1, 2), (1, 3)], [0]),
                note="IP-k, k-i, k-j"),
        Fixture("village_graph_2", _net([(0, 1), (0, 2), (1, 3), (2, 4)], [0]),
                note="IP-k, IP-l, k-i, l-j"),
        Fixture("diamond", _net([(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)], [0]),
                note="agent 4 reached through two relays sharing one first-hop agent"),
        Fixture("diamond_two_hop", _net([(0, 1), (0, 2), (1, 3), (2, 3)], [0])),
        Fixture("twin_branches", _net([(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)], [0]),
                note="disjoint three-hop branches"),
        Fixture("shared_ips", _net([(0, 2), (1, 2), (0, 3), (1, 3), (2, 4), (3, 4)], [0, 1]),
                note="two intermediaries linked to the same two IPs"),
        Fixture("star_2_3", star_graph(2, 3)[0]),
        Fixture("star_3_2", star_graph(3, 2)[0]),
        Fixture("mixed_village", _net(
            [(0, 2), (1, 2), (2, 3), (2, 4), (3, 5), (4, 6), (5, 7), (6, 7), (1, 8), (8, 9)],
            [0, 1])),
        Fixture("unsupported", _net(
            [(0, 1), (0, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 5), (4, 5)], [0]),
            supported=False, note="agent 5: overlapping multi-agent relay sets"),
    ]
    return {f.name: f for f in fx}


FIXTURES = _build()
