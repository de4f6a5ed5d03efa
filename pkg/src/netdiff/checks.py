"""Self-checks: closed forms against the enumeration oracle, analytic
derivatives against central finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixtures import FIXTURES
from .graph import RateCase, compute_reach
from .moments import MomentModel, hessian_convexity, score
from .rates import RateError, closed_form_rate, graph_formula, oracle_rate

Q_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass(frozen=True)
class OracleRow:
    fixture: str
    agent: int
    case: str
    q: float
    closed_form: float
    oracle: float

    @property
    def deviation(self) -> float:
        return abs(self.closed_form - self.oracle)


def oracle_rows(fixtures=None, qs=Q_GRID, max_enum: int = 20, T: int = 4) -> list[OracleRow]:
    """Every in-radius non-IP agent of every fixture at every q.

    Unsupported agents are compared through the tree product form evaluated
    directly on the graph.
    """
    rows = []
    for fx in (fixtures or FIXTURES).values():
        net = fx.net
        reach = compute_reach(net, T)
        for a in range(net.n_agents):
            case = reach.rates[a].case if reach.in_radius[a] else None
            if case is None or case == RateCase.IP:
                continue
            for q in qs:
                try:
                    cf = float(closed_form_rate(net, reach, a, q))
                except RateError:
                    cf = graph_formula(net, a, q, "tree")
                orc = oracle_rate(net, net.ips, a, int(reach.distances[a]), q, max_enum)
                rows.append(OracleRow(fx.name, a, case.label, q, cf, orc))
    return rows


def oracle_summary(rows) -> dict:
    sup = [r.deviation for r in rows if r.case != RateCase.UNSUPPORTED.label]
    uns = [r.deviation for r in rows if r.case == RateCase.UNSUPPORTED.label]
    return {
        "n_rows": len(rows),
        "max_supported_deviation": max(sup, default=0.0),
        "max_unsupported_deviation": max(uns, default=0.0),
        "n_unsupported_rows": len(uns),
    }


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def fd_score(model, theta, method="na", weights=None, h=1e-5) -> np.ndarray:
    p, q = theta
    f = lambda pp, qq: model.objective(method, pp, qq, weights)  # noqa: E731
    return np.array([
        (f(p + h, q) - f(p - h, q)) / (2 * h),
        (f(p, q + h) - f(p, q - h)) / (2 * h),
    ])


def fd_hessian(model, theta, h=1e-4) -> np.ndarray:
    p, q = theta
    cols = []
    for dp, dq in ((h, 0.0), (0.0, h)):
        hi = score(model, (p + dp, q + dq))
        lo = score(model, (p - dp, q - dq))
        cols.append((hi - lo) / (2 * h))
    H = np.column_stack(cols)
    return (H + H.T) / 2.0


def derivative_errors(model, thetas, methods=("na", "2m")) -> dict:
    """Largest relative error of the analytic score and Hessian over ``thetas``."""
    model = MomentModel.of(model)
    worst = {f"score_{m}": 0.0 for m in methods}
    worst["hessian_na"] = 0.0
    for theta in thetas:
        for m in methods:
            worst[f"score_{m}"] = max(worst[f"score_{m}"],
                                      _rel(score(model, theta, m), fd_score(model, theta, m)))
        H = hessian_convexity(model, theta).hessian
        worst["hessian_na"] = max(worst["hessian_na"], _rel(H, fd_hessian(model, theta)))
    return worst


def random_thetas(n: int, seed: int = 0, lo: float = 0.05, hi: float = 0.95) -> list[tuple]:
    rng = np.random.Generator(np.random.PCG64(seed))
    return [tuple(float(x) for x in rng.uniform(lo, hi, 2)) for _ in range(n)]
