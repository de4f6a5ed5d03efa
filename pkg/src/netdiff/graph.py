"""Village networks, information reach and rate-case classification.

Each agent that can be reached by the information within the modelled
horizon is assigned a *rate structure*: a canonical, hashable description
of the part of its link portfolio that feeds its first-opportunity
reception rate.  Two agents with equal structures have identical rate
functions, which is what the type partition relies on.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

#: distance reported for agents with no path to any IP
UNREACHABLE = 10**9
#: closed forms exist through the third exchange only
MAX_DISTANCE = 3


class NetworkError(ValueError):
    """Invalid network or IP specification."""


class RateCase(enum.IntEnum):
    IP = 0
    DIST1 = 1
    DIST2 = 2
    DIST3_TREE = 3
    DIST3_ADAPTED = 4
    UNSUPPORTED = 5

    @property
    def label(self) -> str:
        return _CASE_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "RateCase":
        for case, name in _CASE_LABELS.items():
            if name == label:
                return case
        raise ValueError(f"unknown rate case {label!r}")


_CASE_LABELS = {
    RateCase.IP: "IP",
    RateCase.DIST1: "Dist1",
    RateCase.DIST2: "Dist2",
    RateCase.DIST3_TREE: "Dist3Tree",
    RateCase.DIST3_ADAPTED: "Dist3Adapted",
    RateCase.UNSUPPORTED: "Unsupported",
}

SUPPORTED_CASES = frozenset(RateCase) - {RateCase.UNSUPPORTED}


@dataclass(frozen=True, eq=False)
class VillageNetwork:
    village_id: int
    adjacency: np.ndarray
    ips: frozenset[int]

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.int8)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise NetworkError(f"village {self.village_id}: adjacency must be square")
        if not np.array_equal(adj, adj.T):
            raise NetworkError(f"village {self.village_id}: adjacency not symmetric")
        if np.any(np.diag(adj) != 0):
            i = int(np.flatnonzero(np.diag(adj))[0])
            raise NetworkError(f"village {self.village_id}: self-loop at agent {i}")
        if not np.isin(adj, (0, 1)).all():
            raise NetworkError(f"village {self.village_id}: adjacency must be binary")
        ips = frozenset(int(i) for i in self.ips)
        if not ips:
            raise NetworkError(f"village {self.village_id}: empty IP set")
        bad = [i for i in ips if not 0 <= i < adj.shape[0]]
        if bad:
            raise NetworkError(
                f"village {self.village_id}: IP index {min(bad)} out of range "
                f"for {adj.shape[0]} agents"
            )
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "ips", ips)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as (i, j) with i < j, sorted."""
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    def with_ips(self, ips: Iterable[int]) -> "VillageNetwork":
        return VillageNetwork(self.village_id, self.adjacency, frozenset(ips))

    def __eq__(self, other):
        if not isinstance(other, VillageNetwork):
            return NotImplemented
        return (
            self.village_id == other.village_id
            and self.ips == other.ips
            and np.array_equal(self.adjacency, other.adjacency)
        )

    def __hash__(self):
        return hash((self.village_id, self.ips, self.adjacency.tobytes()))


def build_network(
    edges: Iterable[tuple[int, int]],
    n_agents: int,
    ips: Iterable[int],
    village_id: int = 0,
) -> VillageNetwork:
    """Build a symmetric network from an (unordered, possibly repeated) edge list."""
    adj = np.zeros((n_agents, n_agents), dtype=np.int8)
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise NetworkError(f"village {village_id}: self-loop at agent {i}")
        if not (0 <= i < n_agents and 0 <= j < n_agents):
            raise NetworkError(
                f"village {village_id}: edge ({i},{j}) out of range for {n_agents} agents"
            )
        adj[i, j] = adj[j, i] = 1
    return VillageNetwork(village_id, adj, frozenset(ips))


def bfs_distances(net: VillageNetwork) -> np.ndarray:
    """Multi-source BFS hop distance to the nearest IP."""
    dist = np.full(net.n_agents, UNREACHABLE, dtype=np.int64)
    queue = deque(sorted(net.ips))
    for i in queue:
        dist[i] = 0
    while queue:
        u = queue.popleft()
        for v in net.neighbors(u):
            if dist[v] == UNREACHABLE:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


# --- rate structures -------------------------------------------------------
#
# IP:            ()
# Dist1:         a                      number of IP neighbours
# Dist2:         (a_k, ...)             one entry per distance-1 neighbour k
# Dist3Tree:     ((a_k, ...), ...)      per distance-2 neighbour l, its k's
# Dist3Adapted:  ((a_k, J_k), ...)      per distance-1 k two hops away, with
#                                       J_k = number of l joining k and i
# All tuples sorted, so the structure is canonical.


@dataclass(frozen=True)
class AgentRate:
    case: RateCase
    structure: object
    omega: int  # count of inbound neighbours one step closer to the IPs

    @property
    def key(self) -> tuple:
        return (int(self.case), self.structure)


def _dist3_structure(net: VillageNetwork, dist: np.ndarray, agent: int) -> AgentRate:
    ip_links = {}

    def a(k):
        if k not in ip_links:
            ip_links[k] = int(sum(1 for j in net.neighbors(k) if dist[j] == 0))
        return ip_links[k]

    ls = [int(l) for l in net.neighbors(agent) if dist[l] == 2]
    contacts = {l: [int(k) for k in net.neighbors(l) if dist[k] == 1] for l in ls}

    seen: set[int] = set()
    disjoint = True
    for l in ls:
        if seen.intersection(contacts[l]):
            disjoint = False
            break
        seen.update(contacts[l])

    if disjoint:
        structure = tuple(sorted(tuple(sorted(a(k) for k in contacts[l])) for l in ls))
        return AgentRate(RateCase.DIST3_TREE, structure, len(ls))
    if all(len(contacts[l]) == 1 for l in ls):
        paths: dict[int, int] = {}
        for l in ls:
            (k,) = contacts[l]
            paths[k] = paths.get(k, 0) + 1
        structure = tuple(sorted((a(k), j) for k, j in paths.items()))
        return AgentRate(RateCase.DIST3_ADAPTED, structure, len(ls))
    return AgentRate(RateCase.UNSUPPORTED, None, len(ls))


def agent_rate(net: VillageNetwork, dist: np.ndarray, agent: int) -> AgentRate:
    d = int(dist[agent])
    if d == 0:
        return AgentRate(RateCase.IP, (), 0)
    if d == 1:
        n_ip = int(sum(1 for j in net.neighbors(agent) if dist[j] == 0))
        return AgentRate(RateCase.DIST1, n_ip, n_ip)
    if d == 2:
        ks = [int(k) for k in net.neighbors(agent) if dist[k] == 1]
        structure = tuple(
            sorted(int(sum(1 for j in net.neighbors(k) if dist[j] == 0)) for k in ks)
        )
        return AgentRate(RateCase.DIST2, structure, len(ks))
    if d == 3:
        return _dist3_structure(net, dist, agent)
    raise NetworkError(f"agent {agent} at distance {d} has no closed-form rate")


@dataclass(frozen=True, eq=False)
class ReachProfile:
    """Information reach of one village for horizon ``T``.

    ``indicator[i, t-1]`` is the first-decision indicator for period ``t``.
    ``rates[i]`` is ``None`` for agents outside the information radius.
    """

    village_id: int
    T: int
    distances: np.ndarray
    indicator: np.ndarray
    in_radius: np.ndarray
    rates: tuple = field(repr=False)

    @property
    def rate_case(self) -> list:
        return [r.case if r is not None else None for r in self.rates]

    @property
    def omega(self) -> np.ndarray:
        return np.array([r.omega if r is not None else 0 for r in self.rates])

    @property
    def first_period(self) -> np.ndarray:
        """Decision period d_i + 1 (0 for agents out of radius)."""
        return np.where(self.in_radius, self.distances + 1, 0)

    def included(self) -> np.ndarray:
        """In-radius agents with a supported rate case."""
        return np.array(
            [r is not None and r.case != RateCase.UNSUPPORTED for r in self.rates],
            dtype=bool,
        )

    def counts(self) -> dict:
        cases = self.rate_case
        reachable = self.distances < UNREACHABLE
        return {
            "in_radius": int(self.in_radius.sum()),
            "unsupported": sum(c == RateCase.UNSUPPORTED for c in cases),
            "beyond_radius": int((reachable & ~self.in_radius).sum()),
            "unreachable": int((~reachable).sum()),
        }


def compute_reach(net: VillageNetwork, T: int) -> ReachProfile:
    if T < 2:
        raise ValueError(f"horizon T must be at least 2, got {T}")
    dist = bfs_distances(net)
    radius = min(T - 1, MAX_DISTANCE)
    in_radius = dist <= radius
    indicator = np.zeros((net.n_agents, T), dtype=np.int8)
    rows = np.flatnonzero(in_radius)
    indicator[rows, dist[rows]] = 1
    rates = tuple(
        agent_rate(net, dist, i) if in_radius[i] else None for i in range(net.n_agents)
    )
    n_far = int(((dist > radius) & (dist < UNREACHABLE)).sum())
    if n_far:
        log.info("village %s: %d reachable agents beyond radius %d excluded",
                 net.village_id, n_far, radius)
    for arr in (dist, indicator, in_radius):
        arr.setflags(write=False)
    return ReachProfile(net.village_id, T, dist, indicator, in_radius, rates)


def classify_rate_case(net: VillageNetwork, reach: ReachProfile, agent: int) -> RateCase:
    if not reach.in_radius[agent]:
        raise NetworkError(
            f"village {net.village_id}: agent {agent} is outside the information radius"
        )
    return agent_rate(net, reach.distances, agent).case


@dataclass(frozen=True)
class TypePartition:
    """Link-portfolio types. ``type_of_agent[v][i]`` is 0 for excluded agents."""

    type_of_agent: tuple
    keys: tuple  # keys[m - 1] is the rate key of type m
    counts: tuple
    decision_period: tuple

    @property
    def n_types(self) -> int:
        return len(self.keys)


def partition_types(
    nets: Sequence[VillageNetwork], reaches: Sequence[ReachProfile]
) -> TypePartition:
    del nets  # the reach profiles carry everything needed
    keys = set()
    for reach in reaches:
        for r in reach.rates:
            if r is not None and r.case != RateCase.UNSUPPORTED:
                keys.add(r.key)
    ip_key = (int(RateCase.IP), ())
    ordered = [ip_key] + sorted(keys - {ip_key})
    index = {k: m for m, k in enumerate(ordered, start=1)}

    counts = [0] * len(ordered)
    assign = []
    for reach in reaches:
        row = []
        for r in reach.rates:
            if r is None or r.case == RateCase.UNSUPPORTED:
                row.append(0)
            else:
                m = index[r.key]
                counts[m - 1] += 1
                row.append(m)
        assign.append(np.array(row, dtype=np.int64))
    period = tuple(_case_period(RateCase(k[0])) for k in ordered)
    return TypePartition(tuple(assign), tuple(ordered), tuple(counts), period)


def _case_period(case: RateCase) -> int:
    return {RateCase.IP: 1, RateCase.DIST1: 2, RateCase.DIST2: 3}.get(case, 4)
