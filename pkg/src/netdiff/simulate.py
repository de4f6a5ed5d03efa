"""Diffusion simulator: participation panels with latent information spread.

Random streams
--------------
Every village run uses its own ``numpy.random.Generator(PCG64(seed))``.
Village seeds are derived from a run-level common seed by hashing
``(common_seed, village_id)`` through ``numpy.random.SeedSequence``, so a
village's stream does not depend on which other villages are simulated or
in what order.

Within a run, periods are simulated in order.  Each period first draws one
uniform per agent (agents ascending) for the participation decision, then,
if an exchange follows, one uniform per directed edge (sender ascending,
receiver ascending).  All draws are made whether or not they are used, so
the stream position never depends on earlier outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .graph import ReachProfile, VillageNetwork, compute_reach


@dataclass(frozen=True, eq=False)
class OutcomePanel:
    village_id: int
    y: np.ndarray  # (n_agents, T), y[i, t-1] = Y_it


@dataclass(frozen=True, eq=False)
class InfoPanel:
    village_id: int
    s: np.ndarray  # (n_agents, T-1), s[i, t-1] = S_it
    s0: np.ndarray


@dataclass(frozen=True)
class SeedPlan:
    common_seed: int
    ip_seed: int
    village_seeds: Mapping[int, int] = field(default_factory=dict)
    ip_village_seeds: Mapping[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Village:
    net: VillageNetwork
    reach: ReachProfile
    outcome: OutcomePanel
    info: InfoPanel | None = None

    @property
    def village_id(self) -> int:
        return self.net.village_id


@dataclass(frozen=True)
class Sample:
    villages: tuple
    T: int

    def __post_init__(self):
        ids = [v.village_id for v in self.villages]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate village ids in sample")

    @property
    def n_villages(self) -> int:
        return len(self.villages)


def derive_seed(common_seed: int, village_id: int) -> int:
    ss = np.random.SeedSequence([int(common_seed), int(village_id)])
    return int(ss.generate_state(1, np.uint64)[0])


def seed_plan(run_index: int, villages: int | Sequence[int]) -> SeedPlan:
    """Seeds for one Monte Carlo run: data seed ``run_index``, IP seed ``run_index + 1``."""
    if run_index < 1:
        raise ValueError("run_index starts at 1")
    ids = range(villages) if isinstance(villages, int) else villages
    common, ip = run_index, run_index + 1
    return SeedPlan(
        common,
        ip,
        {int(v): derive_seed(common, v) for v in ids},
        {int(v): derive_seed(ip, v) for v in ids},
    )


def _check_probability(name, x):
    if not (isinstance(x, (int, float, np.floating)) and 0.0 <= x <= 1.0):
        raise ValueError(f"{name} must be a probability in [0, 1], got {x!r}")


def _directed_edges(net: VillageNetwork):
    src, dst = np.nonzero(net.adjacency)  # row-major: sender, then receiver
    return src, dst


def simulate_batch(
    net: VillageNetwork,
    p: float,
    q: float,
    T: int,
    n_reps: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``n_reps`` independent replications of one village.

    Returns ``Y`` of shape (n_reps, n, T) and ``S`` of shape (n_reps, n, T-1).
    """
    _check_probability("p", p)
    _check_probability("q", q)
    if T < 2:
        raise ValueError(f"horizon T must be at least 2, got {T}")
    n = net.n_agents
    src, dst = _directed_edges(net)
    incidence = np.zeros((len(src), n), dtype=np.int32)
    incidence[np.arange(len(src)), dst] = 1

    Y = np.zeros((n_reps, n, T), dtype=np.int8)
    S = np.zeros((n_reps, n, T - 1), dtype=np.int8)
    informed = np.zeros((n_reps, n), dtype=bool)
    informed[:, sorted(net.ips)] = True
    newly = informed.copy()
    for t in range(1, T + 1):
        u = rng.random((n_reps, n))
        Y[:, :, t - 1] = newly & (u < p)
        if t == T:
            break
        v = rng.random((n_reps, len(src)))
        sent = informed[:, src] & (v < q)
        received = (sent.astype(np.int32) @ incidence) > 0
        newly = received & ~informed
        informed = informed | received
        S[:, :, t - 1] = informed
    return Y, S


def simulate_village(
    net: VillageNetwork, p: float, q: float, T: int, seed: int
) -> tuple[OutcomePanel, InfoPanel]:
    rng = np.random.Generator(np.random.PCG64(seed))
    Y, S = simulate_batch(net, p, q, T, 1, rng)
    s0 = np.zeros(net.n_agents, dtype=np.int8)
    s0[sorted(net.ips)] = 1
    return OutcomePanel(net.village_id, Y[0]), InfoPanel(net.village_id, S[0], s0)


def draw_ips(net: VillageNetwork, fraction: float, seed: int) -> frozenset[int]:
    """Uniform subset of ``ceil(fraction * |ips|)`` IPs, without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"IP fraction must lie in (0, 1], got {fraction}")
    ips = sorted(net.ips)
    k = math.ceil(Fraction(fraction).limit_denominator(10**6) * len(ips))
    if k < 1:
        raise ValueError(f"village {net.village_id}: IP draw is empty")
    if k == len(ips):
        return frozenset(ips)
    rng = np.random.Generator(np.random.PCG64(seed))
    return frozenset(int(i) for i in rng.choice(ips, size=k, replace=False))


def simulate_sample(
    nets: Sequence[VillageNetwork],
    p: float,
    q: float,
    T: int,
    plan: SeedPlan,
    ip_fraction: float = 1.0,
    keep_info: bool = False,
) -> Sample:
    """Draw IP subsets, simulate every village and recompute its reach.

    Villages are returned sorted by id.
    """
    villages = []
    for net in sorted(nets, key=lambda n: n.village_id):
        vid = net.village_id
        try:
            seed = plan.village_seeds[vid]
            ip_seed = plan.ip_village_seeds.get(vid, derive_seed(plan.ip_seed, vid))
            sub = net.with_ips(draw_ips(net, ip_fraction, ip_seed))
            outcome, info = simulate_village(sub, p, q, T, seed)
            reach = compute_reach(sub, T)
        except KeyError:
            raise ValueError(f"village {vid}: no seed in plan") from None
        except ValueError as exc:
            raise ValueError(f"village {vid}: {exc}") from exc
        villages.append(Village(sub, reach, outcome, info if keep_info else None))
    return Sample(tuple(villages), T)
