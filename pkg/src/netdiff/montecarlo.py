"""Monte Carlo study: repeated simulate -> estimate on a fixed set of villages."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimation import Grid, estimate
from .graph import VillageNetwork
from .moments import MomentModel
from .simulate import seed_plan, simulate_sample

log = logging.getLogger(__name__)

THREADS_ENV = "NETDIFF_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def geometric_village(
    village_id: int,
    n_agents: int,
    mean_degree: float,
    n_ips: int,
    rng: np.random.Generator,
) -> VillageNetwork:
    """Random geometric graph on the unit square with IPs drawn uniformly."""
    pts = rng.random((n_agents, 2))
    radius = math.sqrt(mean_degree / (math.pi * (n_agents - 1)))
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    adj = (d2 < radius**2).astype(np.int8)
    np.fill_diagonal(adj, 0)
    ips = rng.choice(n_agents, size=n_ips, replace=False)
    return VillageNetwork(village_id, adj, frozenset(int(i) for i in ips))


def gnp_village(village_id, n_agents, mean_degree, n_ips, rng) -> VillageNetwork:
    prob = mean_degree / (n_agents - 1)
    upper = np.triu(rng.random((n_agents, n_agents)) < prob, 1)
    adj = (upper | upper.T).astype(np.int8)
    ips = rng.choice(n_agents, size=n_ips, replace=False)
    return VillageNetwork(village_id, adj, frozenset(int(i) for i in ips))


GENERATORS = {"geometric": geometric_village, "gnp": gnp_village}


def synthetic_villages(
    n_villages: int = 12,
    n_agents: int = 60,
    mean_degree: float = 4.0,
    n_ips: int = 6,
    seed: int = 0,
    kind: str = "gnp",
) -> list[VillageNetwork]:
    make = GENERATORS[kind]
    out = []
    for v in range(n_villages):
        rng = np.random.Generator(np.random.PCG64([seed, v]))
        out.append(make(v, n_agents, mean_degree, n_ips, rng))
    return out


@dataclass
class McConfig:
    theta0: tuple = (0.5, 0.5)
    runs: int = 96
    T: int = 4
    ip_fraction: float = 0.5
    grid_p: str = "0.01:0.99:0.01"
    grid_q: str = "0.01:0.99:0.01"
    methods: tuple = ("na", "2m")
    refine: bool = False
    weights: object = None
    exclude_corner_runs: bool = False
    networks: dict = field(default_factory=lambda: {"synthetic": {}})

    def __post_init__(self):
        self.theta0 = tuple(float(x) for x in self.theta0)
        self.methods = tuple(self.methods)
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not all(0.0 < x < 1.0 for x in self.theta0):
            raise ValueError("theta0 must be interior")
        for m in self.methods:
            if m not in ("na", "2m"):
                raise ValueError(f"unknown method {m!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        d = dict(d)
        grid = d.pop("grid", None)
        if grid:
            d.setdefault("grid_p", grid.get("p", cls.grid_p))
            d.setdefault("grid_q", grid.get("q", cls.grid_q))
        if "theta0" in d and isinstance(d["theta0"], dict):
            d["theta0"] = (d["theta0"]["p"], d["theta0"]["q"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def load_networks(self, base_dir: str = ".") -> list[VillageNetwork]:
        spec = self.networks
        if "synthetic" in spec:
            return synthetic_villages(**(spec["synthetic"] or {}))
        from .io import read_networks

        net_path = os.path.join(base_dir, spec["networks"])
        ip_path = os.path.join(base_dir, spec["ips"])
        return read_networks(net_path, ip_path)


@dataclass
class RunResult:
    run: int
    method: str
    p_hat: float
    q_hat: float
    flags: dict
    error: str | None = None

    @property
    def corner(self) -> bool:
        return bool(self.flags.get("q_at_lower") or self.flags.get("q_at_upper"))


@dataclass
class McTable:
    theta0: tuple
    rows: list  # dicts: method, param, mean, pct_bias, sd, n_used, n_corner, n_failed
    runs: list  # RunResult

    def row(self, method: str, param: str) -> dict:
        for r in self.rows:
            if r["method"] == method and r["param"] == param:
                return r
        raise KeyError((method, param))


def _one_run(args) -> list[RunResult]:
    run, nets, cfg = args
    grid = Grid.parse(cfg.grid_p, cfg.grid_q)
    p0, q0 = cfg.theta0
    plan = seed_plan(run, [n.village_id for n in nets])
    out = []
    try:
        sample = simulate_sample(nets, p0, q0, cfg.T, plan, cfg.ip_fraction)
        model = MomentModel(sample)
    except ValueError as exc:
        return [RunResult(run, m, math.nan, math.nan, {}, str(exc)) for m in cfg.methods]
    for method in cfg.methods:
        try:
            rep = estimate(model, method, grid, refine=cfg.refine,
                           weights=cfg.weights if method == "2m" else None,
                           with_covariance=False)
            out.append(RunResult(run, method, rep.theta_hat[0], rep.theta_hat[1],
                                 dict(rep.corner_flags)))
        except ValueError as exc:
            out.append(RunResult(run, method, math.nan, math.nan, {}, str(exc)))
    return out


def summarize(results: list[RunResult], cfg: McConfig) -> list[dict]:
    rows = []
    for method in cfg.methods:
        mine = [r for r in results if r.method == method]
        ok = [r for r in mine if r.error is None]
        used = [r for r in ok if not (cfg.exclude_corner_runs and r.corner)]
        for param, truth in zip(("p", "q"), cfg.theta0):
            vals = np.array([r.p_hat if param == "p" else r.q_hat for r in used])
            mean = float(vals.mean()) if len(vals) else math.nan
            sd = float(vals.std(ddof=1)) if len(vals) > 1 else math.nan
            rows.append({
                "method": method,
                "param": param,
                "mean": mean,
                "pct_bias": 100.0 * (mean - truth) / truth,
                "sd": sd,
                "n_used": len(used),
                "n_corner": sum(r.corner for r in ok),
                "n_failed": len(mine) - len(ok),
            })
    return rows


def run_study(cfg: McConfig, nets=None, threads: int | None = None) -> McTable:
    """Run ``cfg.runs`` replications; run ``r`` uses data seed ``r`` and IP seed ``r + 1``."""
    if nets is None:
        nets = cfg.load_networks()
    threads = threads or default_threads()
    jobs = [(r, nets, cfg) for r in range(1, cfg.runs + 1)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(_one_run, jobs))
    else:
        batches = [_one_run(j) for j in jobs]
    results = [r for batch in batches for r in batch]
    results.sort(key=lambda r: (r.run, cfg.methods.index(r.method)))
    for r in results:
        if r.error:
            log.warning("run %d (%s) failed: %s", r.run, r.method, r.error)
    return McTable(cfg.theta0, summarize(results, cfg), results)
