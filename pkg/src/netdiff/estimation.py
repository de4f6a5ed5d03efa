"""Grid-search estimation of (p, q), covariance estimates and corner diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .moments import MomentError, MomentModel, hessian_convexity

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
P_MIN, P_MAX = 0.01, 0.99
OMEGA_MODES = ("diagonal_approx", "cluster_robust", "two_moment")


class IdentificationError(ValueError):
    pass


def parse_range(spec: str) -> np.ndarray:
    """Parse ``"a:b:step"`` into an inclusive, evenly spaced grid."""
    try:
        a, b, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like a:b:step, got {spec!r}") from None
    if step <= 0 or b < a:
        raise ValueError(f"invalid grid {spec!r}")
    n = int(round((b - a) / step)) + 1
    values = np.round(a + step * np.arange(n), 12)
    if values[0] <= 0.0 or values[-1] >= 1.0:
        raise ValueError(f"grid {spec!r} must lie inside (0, 1)")
    return values


@dataclass(frozen=True)
class Grid:
    p: np.ndarray
    q: np.ndarray

    @classmethod
    def parse(cls, p: str = "0.01:0.99:0.01", q: str = "0.01:0.99:0.01") -> "Grid":
        return cls(parse_range(p), parse_range(q))

    @property
    def p_step(self) -> float:
        return float(self.p[1] - self.p[0]) if len(self.p) > 1 else 0.0

    @property
    def q_step(self) -> float:
        return float(self.q[1] - self.q[0]) if len(self.q) > 1 else 0.0


DEFAULT_GRID = Grid.parse()


def golden_section(f, a: float, b: float, tol: float = 1e-8) -> float:
    """Minimiser of a unimodal ``f`` on [a, b]."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


# --- identification ----------------------------------------------------------


def detect_corner(sample) -> dict:
    model = MomentModel.of(sample)
    y_non = model.y[~model.is_ip]
    n_part = int(y_non.sum())
    n_non = len(y_non)
    return {
        "n_ip": model.N1,
        "n_ip_participants": int(model.y[model.is_ip].sum()),
        "n_nonip": n_non,
        "n_nonip_participants": n_part,
        "no_ip": model.N1 == 0,
        "no_nonip": n_non == 0,
        "all_nonip_zero": n_non > 0 and n_part == 0,
        "all_nonip_one": n_non > 0 and n_part == n_non,
    }


@dataclass(frozen=True)
class ProfileP:
    p: float
    unclipped: float
    clipped: bool
    exceeds_one: bool


def profile_p(sample, q: float, bounds=(P_MIN, P_MAX)) -> ProfileP:
    """Minimiser over p of the non-aggregated objective at fixed q.

    p = (sum of non-IP participants' rates + #IP participants)
        / (sum of non-IP squared rates + #IP)
    """
    model = MomentModel.of(sample)
    if model.N == 0:
        raise MomentError("empty sample")
    r = model.rates(q)[0]
    non = ~model.is_ip
    part = model.y == 1.0
    num = math.fsum(r[non & part]) + float(np.sum(part & model.is_ip))
    den = math.fsum(r[non] ** 2) + model.N1
    if den <= 0.0:
        raise IdentificationError("profile p undefined: no IPs and all rates zero")
    raw = num / den
    lo, hi = bounds
    p = min(max(raw, lo), hi)
    return ProfileP(p, raw, p != raw, raw > 1.0)


# --- covariance --------------------------------------------------------------


@dataclass
class CovarianceReport:
    D: np.ndarray
    omega_mode: str
    omega: np.ndarray
    V_hat: np.ndarray
    se: tuple
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "omega_mode": self.omega_mode,
            "V_hat": _jsonable(self.V_hat),
            "se": [_num(x) for x in self.se],
            "notes": list(self.notes),
        }


def covariance(sample, theta_hat, method: str = "na", omega_mode: str | None = None,
               ) -> CovarianceReport:
    model = MomentModel.of(sample)
    p, q = (float(x) for x in theta_hat)
    r, dr, _ = model.rates(q)
    g = model.moments(p, q)
    if omega_mode is None:
        omega_mode = "cluster_robust" if method == "na" else "two_moment"
    if method == "na":
        if omega_mode not in ("diagonal_approx", "cluster_robust"):
            raise ValueError(f"omega mode {omega_mode!r} not available for method na")
        D = np.column_stack([-r, -p * dr])
        DtD = D.T @ D
        if abs(np.linalg.det(DtD)) <= 1e-12 * max(1.0, np.abs(DtD).max()) ** 2:
            raise IdentificationError("parameters locally unidentified (singular D'D)")
        if omega_mode == "diagonal_approx":
            meat = (D * (g * g)[:, None]).T @ D
        else:
            scores = D * g[:, None]
            meat = np.zeros((2, 2))
            for k in range(len(model.village_ids)):
                s = scores[model.village_index == k].sum(axis=0)
                meat += np.outer(s, s)
        bread = np.linalg.inv(DtD)
        V = bread @ meat @ bread
        V = (V + V.T) / 2.0
        return CovarianceReport(D, omega_mode, meat, V, _se(V))

    if method != "2m":
        raise ValueError(f"unknown method {method!r}")
    if omega_mode != "two_moment":
        raise ValueError("method 2m uses omega mode two_moment")
    if model.N1 == 0:
        raise IdentificationError("no IPs: p not identified")
    omega11 = p * (1.0 - p) / model.N1
    if model.N2 == 0:
        V = np.array([[omega11, np.nan], [np.nan, np.nan]])
        D = np.array([[-1.0, 0.0], [np.nan, np.nan]])
        rep = CovarianceReport(D, omega_mode, np.diag([omega11, np.nan]), V, _se(V))
        rep.notes.append("q not identified without non-IPs")
        return rep
    non = ~model.is_ip
    mean_r = math.fsum(r[non]) / model.N2
    mean_dr = math.fsum(dr[non]) / model.N2
    D = np.array([[-1.0, 0.0], [-mean_r, -p * mean_dr]])
    sums = [math.fsum(g[non & (model.village_index == k)]) for k in range(len(model.village_ids))]
    omega22 = math.fsum(s * s for s in sums) / model.N2**2
    omega = np.diag([omega11, omega22])
    DtD = D.T @ D
    if abs(np.linalg.det(DtD)) <= 1e-24:
        raise IdentificationError("parameters locally unidentified (singular D'D)")
    bread = np.linalg.inv(DtD)
    V = bread @ D.T @ omega @ D @ bread
    V = (V + V.T) / 2.0
    return CovarianceReport(D, omega_mode, omega, V, _se(V))


def _se(V):
    d = np.diag(V)
    return tuple(float(math.sqrt(x)) if np.isfinite(x) and x >= 0 else float("nan") for x in d)


# --- estimation --------------------------------------------------------------


@dataclass
class EstimateReport:
    method: str
    theta_hat: tuple
    objective_at_opt: float
    grid_theta: tuple
    profile_used: bool
    refined: bool
    corner_flags: dict
    identification: dict
    diagnostics: dict
    covariance: CovarianceReport | None = None
    weights: object = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "theta_hat": {"p": self.theta_hat[0], "q": self.theta_hat[1]},
            "grid_theta": {"p": self.grid_theta[0], "q": self.grid_theta[1]},
            "objective_at_opt": self.objective_at_opt,
            "profile_used": self.profile_used,
            "refined": self.refined,
            "weights": self.weights if not isinstance(self.weights, tuple) else list(self.weights),
            "corner_flags": dict(self.corner_flags),
            "identification": dict(self.identification),
            "diagnostics": _jsonable(self.diagnostics),
            "covariance": self.covariance.to_dict() if self.covariance else None,
        }
        return out


def grid_surface(model: MomentModel, method: str, grid: Grid, weights=None) -> np.ndarray:
    """Objective on the grid, shape (len(grid.q), len(grid.p))."""
    model.prime(grid.q)
    return np.vstack([model.objective_rows(method, grid.p, q, weights) for q in grid.q])


def _argmin_q_major(surface: np.ndarray) -> tuple[int, int]:
    # first minimum in q-major order: ties go to smaller q, then smaller p
    flat = int(np.argmin(surface.ravel()))
    return divmod(flat, surface.shape[1])


def estimate(
    sample,
    method: str = "na",
    grid: Grid = DEFAULT_GRID,
    refine: bool = False,
    profile: bool = False,
    weights=None,
    omega_mode: str | None = None,
    with_covariance: bool = True,
) -> EstimateReport:
    model = MomentModel.of(sample)
    if method not in ("na", "2m"):
        raise ValueError(f"unknown method {method!r}")
    if profile and method != "na":
        raise ValueError("profiling p is only available for method na")
    ident = detect_corner(model)
    if ident["no_ip"] and model.N2 == 0:
        raise IdentificationError("empty sample: no included agents")
    if method == "2m":
        model.check_two_moment()

    bounds = (float(grid.p[0]), float(grid.p[-1]))
    if profile:
        values = []
        ps = []
        for q in grid.q:
            pp = profile_p(model, q, bounds).p
            ps.append(pp)
            values.append(model.objective("na", pp, q))
        values = np.array(values)
        iq = int(np.argmin(values))
        theta = (ps[iq], float(grid.q[iq]))
        best = float(values[iq])
    else:
        surface = grid_surface(model, method, grid, weights)
        iq, ip = _argmin_q_major(surface)
        theta = (float(grid.p[ip]), float(grid.q[iq]))
        best = float(surface[iq, ip])
    grid_theta = theta

    if refine:
        theta, best = _refine(model, method, theta, best, grid, weights, profile)

    prof = profile_p(model, theta[1], bounds)
    corner = {
        "q_at_lower": bool(grid_theta[1] == grid.q[0]),
        "q_at_upper": bool(grid_theta[1] == grid.q[-1]),
        "p_at_lower": bool(grid_theta[0] <= grid.p[0]),
        "p_at_upper": bool(grid_theta[0] >= grid.p[-1]),
        "p_out_of_unit": bool(prof.exceeds_one),
    }
    diagnostics = {
        "N": model.N,
        "N1": model.N1,
        "N2": model.N2,
        "excluded": dict(model.excluded),
        "n_types": model.partition.n_types,
    }
    if 0.0 < theta[0] < 1.0 and 0.0 < theta[1] < 1.0:
        h = hessian_convexity(model, theta)
        diagnostics.update(
            hessian=h.hessian, hessian_determinant=h.determinant,
            convex=h.convex, curvature_condition=h.curvature_condition,
        )
    report = EstimateReport(
        method=method,
        theta_hat=theta,
        objective_at_opt=best,
        grid_theta=grid_theta,
        profile_used=profile,
        refined=refine,
        corner_flags=corner,
        identification=ident,
        diagnostics=diagnostics,
        weights=weights,
    )
    if with_covariance:
        if corner["q_at_lower"] or corner["q_at_upper"]:
            diagnostics["covariance_skipped"] = "corner solution"
        else:
            try:
                report.covariance = covariance(model, theta, method, omega_mode)
            except IdentificationError as exc:
                diagnostics["covariance_skipped"] = str(exc)
    return report


def _refine(model, method, theta, best, grid, weights, profile):
    p, q = theta
    plo, phi = float(grid.p[0]), float(grid.p[-1])
    qlo, qhi = float(grid.q[0]), float(grid.q[-1])
    if profile:
        def fq(x):
            return model.objective("na", profile_p(model, x, (plo, phi)).p, x)
        q_new = golden_section(fq, max(qlo, q - grid.q_step), min(qhi, q + grid.q_step))
        p_new = profile_p(model, q_new, (plo, phi)).p
        val = model.objective("na", p_new, q_new)
        return ((p_new, q_new), val) if val < best else (theta, best)
    for _ in range(2):
        q_new = golden_section(lambda x: model.objective(method, p, x, weights),
                               max(qlo, q - grid.q_step), min(qhi, q + grid.q_step))
        p_new = golden_section(lambda x: model.objective(method, x, q_new, weights),
                               max(plo, p - grid.p_step), min(phi, p + grid.p_step))
        val = model.objective(method, p_new, q_new, weights)
        if val < best:
            p, q, best = p_new, q_new, val
    return (p, q), best


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


__all__ = [
    "CovarianceReport", "EstimateReport", "Grid", "IdentificationError", "ProfileP",
    "covariance", "detect_corner", "estimate", "golden_section", "grid_surface",
    "parse_range", "profile_p",
]
