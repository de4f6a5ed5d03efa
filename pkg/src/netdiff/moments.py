"""Individual moment conditions and the two objective functions.

For every included agent (in radius, supported rate case) the moment is

    g_i(p, q) = Y_{i, t_i} - p * rbar_i(q),     t_i = d_i + 1.

Sums run in a fixed order (village ascending, agent ascending) through
``math.fsum``, so results do not depend on how villages were scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import RateCase, partition_types
from .rates import rate_from_structure

PROPORTIONAL = "proportional"


class MomentError(ValueError):
    pass


@dataclass(frozen=True)
class ParamPoint:
    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def __iter__(self):
        yield self.p
        yield self.q


def _theta(theta):
    p, q = theta
    return float(p), float(q)


@dataclass(frozen=True, eq=False)
class MomentVector:
    g: np.ndarray
    is_ip: np.ndarray
    village_id: np.ndarray
    agent: np.ndarray
    type_of_agent: np.ndarray
    excluded: dict

    @property
    def residual(self) -> np.ndarray:
        return self.g

    @property
    def N(self) -> int:
        return len(self.g)

    @property
    def N1(self) -> int:
        return int(self.is_ip.sum())

    @property
    def N2(self) -> int:
        return self.N - self.N1


class MomentModel:
    """A sample compiled for repeated evaluation of moments and objectives."""

    def __init__(self, sample):
        self.T = sample.T
        reaches = [v.reach for v in sample.villages]
        self.partition = partition_types([v.net for v in sample.villages], reaches)
        y, ip, vil, agent, typ = [], [], [], [], []
        excluded = {"beyond_radius": 0, "unreachable": 0, "unsupported": 0}
        for k, village in enumerate(sample.villages):
            reach = village.reach
            counts = reach.counts()
            for key in excluded:
                excluded[key] += counts[key]
            panel = village.outcome.y
            for i in np.flatnonzero(reach.included()):
                t = int(reach.distances[i])  # column of period d_i + 1
                if i >= panel.shape[0] or t >= panel.shape[1] or panel[i, t] not in (0, 1):
                    raise MomentError(
                        f"village {village.village_id}: missing outcome for agent {i} "
                        f"in period {t + 1}"
                    )
                y.append(float(panel[i, t]))
                ip.append(reach.rates[i].case == RateCase.IP)
                vil.append(k)
                agent.append(int(i))
                typ.append(int(self.partition.type_of_agent[k][i]))
        self.y = np.array(y, dtype=float)
        self.is_ip = np.array(ip, dtype=bool)
        self.village_index = np.array(vil, dtype=np.int64)
        self.village_ids = np.array([v.village_id for v in sample.villages])
        self.agent = np.array(agent, dtype=np.int64)
        self.type_of_agent = np.array(typ, dtype=np.int64)
        self.excluded = excluded
        self.N = len(self.y)
        self.N1 = int(self.is_ip.sum())
        self.N2 = self.N - self.N1
        self._ip_idx = np.flatnonzero(self.is_ip)
        self._nonip_idx = np.flatnonzero(~self.is_ip)
        # agents sharing (type, y) share g; objectives sum over these groups
        pairs = np.column_stack([self.type_of_agent, self.y.astype(np.int64)]).reshape(-1, 2)
        keys, counts = np.unique(pairs, axis=0, return_counts=True)
        self._g_col = keys[:, 0] - 1
        self._g_y = keys[:, 1].astype(float)
        self._g_count = np.asarray(counts, dtype=float)
        self._g_ip = keys[:, 0] == 1
        self._cache: dict = {}

    @classmethod
    def of(cls, sample_or_model) -> "MomentModel":
        if isinstance(sample_or_model, cls):
            return sample_or_model
        return cls(sample_or_model)

    # -- rates ---------------------------------------------------------------

    def type_rates(self, qs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rates of every type on a q grid, each of shape (len(qs), M)."""
        qs = np.atleast_1d(np.asarray(qs, dtype=float))
        M = self.partition.n_types
        out = [np.empty((len(qs), M)) for _ in range(3)]
        for m, (case, structure) in enumerate(self.partition.keys):
            vals = rate_from_structure(RateCase(case), structure, qs)
            for o, v in zip(out, vals):
                o[:, m] = v
        return tuple(out)

    def prime(self, qs) -> None:
        """Evaluate and cache the type rates for a whole q grid at once."""
        qs = np.atleast_1d(np.asarray(qs, dtype=float))
        r, d1, d2 = self.type_rates(qs)
        if len(self._cache) + len(qs) > 4096:
            self._cache.clear()
        for k, q in enumerate(qs):
            self._cache[float(q)] = (r[k], d1[k], d2[k])

    def rates_by_type(self, q: float):
        """``(r, dr/dq, d2r/dq2)`` per type at ``q``."""
        q = float(q)
        hit = self._cache.get(q)
        if hit is None:
            self.prime([q])
            hit = self._cache[q]
        return hit

    def rates(self, q: float):
        """Per-agent ``(r, dr/dq, d2r/dq2)`` at ``q``."""
        col = self.type_of_agent - 1
        return tuple(x[col] for x in self.rates_by_type(q))

    # -- moments and objectives ----------------------------------------------

    def moments(self, p: float, q: float) -> np.ndarray:
        r = self.rates(q)[0]
        return self.y - p * r

    def _group_residuals(self, ps, q) -> np.ndarray:
        r = self.rates_by_type(q)[0][self._g_col]
        return self._g_y[None, :] - np.asarray(ps, dtype=float)[:, None] * r[None, :]

    def objective_na_rows(self, ps, q) -> np.ndarray:
        if self.N == 0:
            raise MomentError("no included agents (N = 0)")
        G = self._group_residuals(ps, q)
        W = self._g_count * G * G
        return np.array([math.fsum(row) for row in W]) / self.N

    def group_means(self, ps, q) -> tuple[np.ndarray, np.ndarray]:
        W = self._g_count * self._group_residuals(ps, q)
        g1 = np.array([math.fsum(row) for row in W[:, self._g_ip]]) / self.N1
        g2 = np.array([math.fsum(row) for row in W[:, ~self._g_ip]]) / self.N2
        return g1, g2

    def weights(self, weights) -> tuple[float, float]:
        if weights is None:
            return 1.0, 1.0
        if isinstance(weights, str):
            if weights != PROPORTIONAL:
                raise ValueError(f"unknown weighting {weights!r}")
            return self.N1 / self.N, self.N2 / self.N
        w1, w2 = weights
        return float(w1), float(w2)

    def check_two_moment(self):
        if self.N1 < 1:
            raise MomentError("two-moment objective needs at least one IP")
        if self.N2 < 1:
            raise MomentError("q not identified without non-IPs")

    def objective_2m_rows(self, ps, q, weights=None) -> np.ndarray:
        self.check_two_moment()
        w1, w2 = self.weights(weights)
        g1, g2 = self.group_means(ps, q)
        return w1 * g1 * g1 + w2 * g2 * g2

    def objective_rows(self, method: str, ps, q, weights=None) -> np.ndarray:
        if method == "na":
            return self.objective_na_rows(ps, q)
        if method == "2m":
            return self.objective_2m_rows(ps, q, weights)
        raise ValueError(f"unknown method {method!r}")

    def objective(self, method: str, p: float, q: float, weights=None) -> float:
        return float(self.objective_rows(method, [p], q, weights)[0])


# --- public operations -------------------------------------------------------


def individual_moments(sample, theta) -> MomentVector:
    model = MomentModel.of(sample)
    p, q = _theta(theta)
    return MomentVector(
        g=model.moments(p, q),
        is_ip=model.is_ip.copy(),
        village_id=model.village_ids[model.village_index],
        agent=model.agent.copy(),
        type_of_agent=model.type_of_agent.copy(),
        excluded=dict(model.excluded),
    )


def objective_na(sample, theta) -> float:
    p, q = _theta(theta)
    return MomentModel.of(sample).objective("na", p, q)


def objective_na_by_village(sample, theta) -> float:
    """Same objective assembled from per-village partial sums."""
    model = MomentModel.of(sample)
    p, q = _theta(theta)
    if model.N == 0:
        raise MomentError("no included agents (N = 0)")
    g = model.moments(p, q)
    parts = [math.fsum(g[model.village_index == k] ** 2)
             for k in range(len(model.village_ids))]
    return math.fsum(parts) / model.N


def objective_2m(sample, theta, weights=None) -> float:
    p, q = _theta(theta)
    return MomentModel.of(sample).objective("2m", p, q, weights)


def score(sample, theta, method: str = "na", weights=None) -> np.ndarray:
    """Analytic gradient ``(dQ/dp, dQ/dq)``."""
    model = MomentModel.of(sample)
    p, q = _theta(theta)
    r, dr, _ = model.rates(q)
    g = model.moments(p, q)
    if method == "na":
        if model.N == 0:
            raise MomentError("no included agents (N = 0)")
        dp = -2.0 * math.fsum(g * r) / model.N
        dq = -2.0 * p * math.fsum(g * dr) / model.N
        return np.array([dp, dq])
    if method == "2m":
        model.check_two_moment()
        w1, w2 = model.weights(weights)
        ip, non = model._ip_idx, model._nonip_idx
        g1 = math.fsum(g[ip]) / model.N1
        g2 = math.fsum(g[non]) / model.N2
        mean_r = math.fsum(r[non]) / model.N2
        mean_dr = math.fsum(dr[non]) / model.N2
        dp = 2.0 * w1 * g1 * (-1.0) + 2.0 * w2 * g2 * (-mean_r)
        dq = 2.0 * w2 * g2 * (-p * mean_dr)
        return np.array([dp, dq])
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class HessianReport:
    hessian: np.ndarray
    determinant: float
    convex: bool
    curvature_condition: bool
    degenerate_q: bool

    @property
    def flag(self) -> str:
        if self.degenerate_q:
            return "degenerate in q"
        return "convex" if self.convex else "not convex"


def hessian_convexity(sample, theta) -> HessianReport:
    """Hessian of the non-aggregated objective and its convexity diagnostics.

    ``curvature_condition`` is the necessary condition on the q-curvature:
    sum over agents of p (r'^2 + r r'') exceeds the sum of r'' over
    participants.
    """
    model = MomentModel.of(sample)
    p, q = _theta(theta)
    if model.N == 0:
        raise MomentError("no included agents (N = 0)")
    r, dr, d2r = model.rates(q)
    g = model.moments(p, q)
    c = 2.0 / model.N
    hpp = c * math.fsum(r * r)
    hpq = c * math.fsum(p * r * dr - g * dr)
    hqq = c * math.fsum(p * p * dr * dr - g * p * d2r)
    H = np.array([[hpp, hpq], [hpq, hqq]])
    det = hpp * hqq - hpq * hpq
    lhs = math.fsum(p * (dr * dr + r * d2r))
    rhs = math.fsum(d2r[model.y == 1.0])
    degenerate = not np.any(dr != 0.0)
    return HessianReport(
        hessian=H,
        determinant=float(det),
        convex=bool(det > 0.0 and hpp > 0.0),
        curvature_condition=bool(lhs > rhs),
        degenerate_q=bool(degenerate),
    )


def decompose_2m(sample, theta) -> dict:
    """Split the unit-weight two-moment objective into own-square and cross terms."""
    model = MomentModel.of(sample)
    model.check_two_moment()
    p, q = _theta(theta)
    eps = model.moments(p, q)
    out = {}
    for name, idx, n in (("ip", model._ip_idx, model.N1), ("nonip", model._nonip_idx, model.N2)):
        e = eps[idx]
        total = math.fsum(e)
        sq = math.fsum(e * e)
        out[f"{name}_sq_sum"] = sq / n**2
        out[f"{name}_cross"] = (total * total - sq) / n**2
    return out
