"""First-opportunity reception rates.

Closed forms are evaluated from an agent's rate structure (see
:mod:`netdiff.graph`) together with their first and second derivatives in
``q``.  :func:`oracle_rate` computes the same probabilities by exhaustive
enumeration of the latent information process and shares no code with the
closed forms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .graph import (
    RateCase,
    ReachProfile,
    VillageNetwork,
    bfs_distances,
)

DEFAULT_MAX_ENUM = 20


class RateError(ValueError):
    pass


class EnumerationTooLarge(RateError):
    pass


def _noisy_or(terms):
    """1 - prod(1 - u_j) and its first two derivatives.

    ``terms`` yields ``(u, du, d2u)`` triples.
    """
    P, dP, d2P = 1.0, 0.0, 0.0
    for u, du, d2u in terms:
        F, dF, d2F = 1.0 - u, -du, -d2u
        P, dP, d2P = P * F, dP * F + P * dF, d2P * F + 2.0 * dP * dF + P * d2F
    return 1.0 - P, -dP, -d2P


def _first_exchange(n_ip, q):
    # n_ip independent attempts, each succeeding with probability q
    return _noisy_or((q, 1.0, 0.0) for _ in range(n_ip))


def _relay(r, q):
    """(q * r, derivatives) for a rate r passed on over one more link."""
    f, df, d2f = r
    return q * f, f + q * df, 2.0 * df + q * d2f


def _second_exchange(ip_counts, q):
    return _noisy_or(_relay(_first_exchange(a, q), q) for a in ip_counts)


def _two_hop_paths(n_paths, q):
    # 1 - (1 - q^2)^n_paths
    return _noisy_or((q * q, 2.0 * q, 2.0) for _ in range(n_paths))


def _adapted_term(n_ip, n_paths, q):
    r, dr, d2r = _first_exchange(n_ip, q)
    w, dw, d2w = _two_hop_paths(n_paths, q)
    return r * w, dr * w + r * dw, d2r * w + 2.0 * dr * dw + r * d2w


def rate_from_structure(case: RateCase, structure, q):
    """Closed-form rate with derivatives ``(r, dr/dq, d2r/dq2)``.

    ``q`` may be a scalar or a numpy array.
    """
    if case == RateCase.IP:
        one = np.ones_like(q, dtype=float) if isinstance(q, np.ndarray) else 1.0
        return one, 0.0 * one, 0.0 * one
    if case == RateCase.DIST1:
        return _first_exchange(structure, q)
    if case == RateCase.DIST2:
        return _second_exchange(structure, q)
    if case == RateCase.DIST3_TREE:
        return _noisy_or(_relay(_second_exchange(ks, q), q) for ks in structure)
    if case == RateCase.DIST3_ADAPTED:
        return _noisy_or(_adapted_term(a, j, q) for a, j in structure)
    raise RateError("no closed form for an Unsupported agent")


def _agent_structure(reach: ReachProfile, agent: int):
    r = reach.rates[agent]
    if r is None:
        raise RateError(f"agent {agent} is outside the information radius")
    if r.case == RateCase.UNSUPPORTED:
        raise RateError(f"agent {agent}: no closed form (Unsupported rate case)")
    return r


def closed_form_rate(net: VillageNetwork, reach: ReachProfile, agent: int, q):
    del net
    r = _agent_structure(reach, agent)
    return rate_from_structure(r.case, r.structure, q)[0]


def rate_gradient(net: VillageNetwork, reach: ReachProfile, agent: int, q):
    del net
    r = _agent_structure(reach, agent)
    _, d1, d2 = rate_from_structure(r.case, r.structure, q)
    return d1, d2


def star_formula(omega_i: int, omega_bar: int, q):
    """Rate of an agent linked to ``omega_i`` intermediaries, each with ``omega_bar`` IP links."""
    if omega_i < 1 or omega_bar < 1:
        raise ValueError("omega_i and omega_bar must be at least 1")
    return 1.0 - (1.0 - q * (1.0 - (1.0 - q) ** omega_bar)) ** omega_i


def graph_formula(net: VillageNetwork, agent: int, q: float, form: str) -> float:
    """Evaluate a distance-3 closed form straight from the adjacency matrix.

    ``form`` is ``"tree"`` or ``"adapted"``.  Used to compare both formulas
    against the oracle whatever the classifier decided.
    """
    g = net.adjacency
    dist = bfs_distances(net)
    n = net.n_agents
    r1 = {k: 1.0 - np.prod([1.0 - q * g[k, j] for j in range(n) if dist[j] == 0])
          for k in range(n) if dist[k] == 1}
    if form == "tree":
        r2 = {l: 1.0 - np.prod([1.0 - r1[k] * q * g[l, k] for k in r1])
              for l in range(n) if dist[l] == 2}
        return float(1.0 - np.prod([1.0 - r2[l] * q * g[agent, l] for l in r2]))
    if form == "adapted":
        ls = [l for l in range(n) if dist[l] == 2]
        out = 1.0
        for k in r1:
            paths = np.prod([1.0 - q * q * g[k, l] * g[l, agent] for l in ls])
            out *= 1.0 - r1[k] * (1.0 - paths)
        return float(1.0 - out)
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class RateTable:
    village_id: int
    q: float
    rbar: np.ndarray
    drbar_dq: np.ndarray
    d2rbar_dq2: np.ndarray
    case: tuple  # RateCase or None per agent


def rate_table(net: VillageNetwork, reach: ReachProfile, q: float) -> RateTable:
    n = net.n_agents
    r = np.full(n, np.nan)
    d1 = np.full(n, np.nan)
    d2 = np.full(n, np.nan)
    for i, ar in enumerate(reach.rates):
        if ar is not None and ar.case != RateCase.UNSUPPORTED:
            r[i], d1[i], d2[i] = rate_from_structure(ar.case, ar.structure, q)
    return RateTable(net.village_id, q, r, d1, d2, tuple(reach.rate_case))


# --- enumeration oracle ----------------------------------------------------


def first_reception_distribution(
    net: VillageNetwork,
    ips,
    n_exchanges: int,
    q: float,
    track,
    max_enum: int = DEFAULT_MAX_ENUM,
) -> dict:
    """Exact joint law of the first-reception exchange of the ``track`` agents.

    Returns a mapping from a tuple of first-reception exchanges (0 for IPs,
    ``None`` for agents still uninformed after ``n_exchanges``) to its
    probability.  Every realisation of the latent information statuses of
    the agents within ``n_exchanges`` hops of the IPs is enumerated; given the
    statuses after one exchange, an uninformed agent with ``m`` informed
    neighbours receives with probability ``1 - (1 - q)^m``, independently of
    the others (its ``m`` incoming transmission draws are independent).
    """
    ips = frozenset(int(i) for i in ips)
    net = net.with_ips(ips)
    dist = bfs_distances(net)
    relevant = [int(i) for i in np.flatnonzero(dist <= n_exchanges)]
    if len(relevant) > max_enum:
        raise EnumerationTooLarge(
            f"enumeration needs {len(relevant)} agents, bound is {max_enum}"
        )
    free = [i for i in relevant if i not in ips]
    bit = {a: 1 << b for b, a in enumerate(free)}
    nbrs = {a: [int(j) for j in net.neighbors(a)] for a in free}

    def informed(mask, j):
        return j in ips or (j in bit and mask & bit[j])

    track = tuple(int(a) for a in track)
    start = tuple(0 if a in ips else None for a in track)
    law = {(0, start): 1.0}
    for step in range(1, n_exchanges + 1):
        nxt: dict = {}
        for (mask, first), prob in law.items():
            cands = []
            for a in free:
                if mask & bit[a]:
                    continue
                m = sum(1 for j in nbrs[a] if informed(mask, j))
                if m:
                    cands.append((a, 1.0 - (1.0 - q) ** m))
            for outcome in itertools.product((False, True), repeat=len(cands)):
                pr = prob
                new = mask
                for (a, pa), hit in zip(cands, outcome):
                    if hit:
                        pr *= pa
                        new |= bit[a]
                    else:
                        pr *= 1.0 - pa
                if pr == 0.0:
                    continue
                ft = tuple(
                    f if f is not None or a not in bit or not new & bit[a] else step
                    for a, f in zip(track, first)
                )
                key = (new, ft)
                nxt[key] = nxt.get(key, 0.0) + pr
        law = nxt
    out: dict = {}
    for (_, ft), prob in law.items():
        out[ft] = out.get(ft, 0.0) + prob
    return out


def oracle_rate(
    net: VillageNetwork,
    ips,
    agent: int,
    t_exchange: int,
    q: float,
    max_enum: int = DEFAULT_MAX_ENUM,
) -> float:
    """Exact probability that ``agent`` is informed for the first time at exchange ``t_exchange``."""
    if t_exchange not in (1, 2, 3):
        raise ValueError("t_exchange must be 1, 2 or 3")
    law = first_reception_distribution(net, ips, t_exchange, q, (agent,), max_enum)
    return law.get((t_exchange,), 0.0)
