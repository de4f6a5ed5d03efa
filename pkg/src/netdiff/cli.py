"""Command-line interface: ``netdiff <subcommand> ...``.

Every failure prints one line ``netdiff: error: <Kind>: <message>`` to stderr
and exits with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .estimation import Grid, estimate
from .io import export_surface, load_sample, read_networks, write_csv, write_info, write_outcomes
from .moments import MomentModel
from .montecarlo import THREADS_ENV, McConfig, default_threads, run_study

log = logging.getLogger("netdiff")

OMEGA = {"diagonal": "diagonal_approx", "cluster": "cluster_robust", "twomoment": "two_moment"}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {message}")


def _existing(path: str) -> str:
    if not os.path.isfile(path):
        raise argparse.ArgumentTypeError(f"file not found: {path}")
    return path


def _prob(text: str) -> float:
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return x


def _weights(text: str | None):
    if text in (None, "unit"):
        return None
    if text == "proportional":
        return "proportional"
    try:
        w1, w2 = (float(x) for x in text.split(","))
    except ValueError:
        raise CliError(f"weights must be unit, proportional or w1,w2; got {text!r}") from None
    return (w1, w2)


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args):
    from .simulate import seed_plan, simulate_sample

    nets = read_networks(args.networks, args.ips)
    plan = seed_plan(args.seed, [n.village_id for n in nets])
    sample = simulate_sample(nets, args.p, args.q, args.T, plan, args.ip_fraction,
                             keep_info=bool(args.info))
    write_outcomes(args.out, sample)
    if args.info:
        write_info(args.info, sample)
    if args.ips_out:
        from .io import IP_HEADER
        write_csv(args.ips_out, IP_HEADER,
                  ((v.village_id, i) for v in sample.villages for i in sorted(v.net.ips)))


def cmd_rates(args):
    from .graph import RateCase, compute_reach
    from .rates import EnumerationTooLarge, oracle_rate, rate_from_structure

    header = ["village", "agent", "case", "rbar", "drbar"]
    if args.check_oracle:
        header += ["oracle", "deviation"]
    rows = []
    worst = 0.0
    skipped = 0
    for net in read_networks(args.networks, args.ips):
        reach = compute_reach(net, args.T)
        for a in range(net.n_agents):
            if not reach.in_radius[a]:
                continue
            case = reach.rates[a].case
            if case == RateCase.UNSUPPORTED:
                r = dr = None
            else:
                r, dr, _ = (float(x) for x in rate_from_structure(
                    case, reach.rates[a].structure, args.q))
            row = [net.village_id, a, case.label, r, dr]
            if args.check_oracle:
                try:
                    orc = 1.0 if case == RateCase.IP else oracle_rate(
                        net, net.ips, a, int(reach.distances[a]), args.q, args.max_enum)
                except EnumerationTooLarge:
                    orc = None
                    skipped += 1
                dev = abs(r - orc) if r is not None and orc is not None else None
                if dev is not None:
                    worst = max(worst, dev)
                row += [orc, dev]
            rows.append(row)
    write_csv(args.out, header, rows)
    if skipped:
        log.warning("oracle skipped for %d agents (more than --max-enum relevant agents)", skipped)
    if args.check_oracle:
        log.info("largest supported deviation from oracle: %.3g", worst)


def _sample(args):
    return load_sample(args.networks, args.ips, args.outcomes)


def cmd_objective(args):
    model = MomentModel(_sample(args))
    value = model.objective(args.method, args.p, args.q, _weights(args.weights))
    write_csv(args.out, ["method", "p", "q", "Q"],
              [(args.method, args.p, args.q, value)])


def cmd_surface(args):
    sample = _sample(args)
    grid = Grid.parse(args.grid_p, args.grid_q)
    rows = export_surface(sample, args.method, grid, args.out, _weights(args.weights))
    if args.plot:
        from .plotting import surface_plot
        surface_plot(args.plot, rows, args.method)


def cmd_estimate(args):
    sample = _sample(args)
    model = MomentModel(sample)
    grid = Grid.parse(args.grid_p, args.grid_q)
    methods = ("na", "2m") if args.method == "both" else (args.method,)
    reports = {}
    for m in methods:
        omega = OMEGA[args.omega] if args.omega else None
        if m == "2m" and omega and omega != "two_moment":
            omega = None
        rep = estimate(model, m, grid, refine=args.refine, profile=args.profile and m == "na",
                       weights=_weights(args.weights) if m == "2m" else None, omega_mode=omega)
        reports[m] = rep.to_dict()
    out = reports[methods[0]] if len(methods) == 1 else reports
    text = json.dumps(out, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _flag_text(r) -> str:
    if r.error:
        return "failed"
    return ";".join(k for k, v in sorted(r.flags.items()) if v)


def cmd_mc(args):
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    cfg = McConfig.from_dict(raw)
    nets = cfg.load_networks(os.path.dirname(os.path.abspath(args.config)))
    threads = args.threads or default_threads()
    table = run_study(cfg, nets, threads)
    os.makedirs(args.out, exist_ok=True)
    j = lambda name: os.path.join(args.out, name)  # noqa: E731
    write_csv(j("estimates.csv"), ["run", "method", "p_hat", "q_hat", "flags"],
              ((r.run, r.method, r.p_hat, r.q_hat, _flag_text(r)) for r in table.runs))
    cols = ["method", "param", "mean", "pct_bias", "sd", "n_used", "n_corner", "n_failed"]
    write_csv(j("table.csv"), cols, ([row[c] for c in cols] for row in table.rows))
    by_run = {}
    for r in table.runs:
        by_run.setdefault(r.run, {})[r.method] = r
    header = ["run"] + [f"{k}_{m}" for m in cfg.methods for k in ("p_hat", "q_hat")]
    write_csv(j("scatter.csv"), header, (
        [run] + [x for m in cfg.methods for x in (by_run[run][m].p_hat, by_run[run][m].q_hat)]
        for run in sorted(by_run)))
    from .plotting import scatter_plot
    scatter_plot(j("scatter.png"), table.runs, cfg.theta0, cfg.methods)
    for row in table.rows:
        log.info("%s %s mean=%.4f sd=%.4f", row["method"], row["param"], row["mean"], row["sd"])


def cmd_check(args):
    from .checks import derivative_errors, oracle_rows, oracle_summary, random_thetas
    from .montecarlo import synthetic_villages
    from .simulate import seed_plan, simulate_sample

    summary = oracle_summary(oracle_rows(max_enum=args.max_enum))
    nets = synthetic_villages()
    sample = simulate_sample(nets, 0.5, 0.5, 4, seed_plan(1, len(nets)), 0.5)
    derr = derivative_errors(sample, random_thetas(10, seed=args.seed))
    ok = {
        "oracle_supported": summary["max_supported_deviation"] <= 1e-12,
        "oracle_unsupported_detected": summary["max_unsupported_deviation"] > 1e-9,
        "score": max(v for k, v in derr.items() if k.startswith("score")) <= 1e-6,
        "hessian": derr["hessian_na"] <= 1e-4,
    }
    json.dump({"oracle": summary, "derivatives": derr, "passed": ok}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    if not all(ok.values()):
        raise CliError("check failed: " + ",".join(k for k, v in ok.items() if not v))


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="netdiff", description="Diffusion-participation moment estimation.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker processes (overrides ${THREADS_ENV})")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def network_args(p):
        p.add_argument("--networks", required=True, type=_existing)
        p.add_argument("--ips", required=True, type=_existing)

    def sample_args(p):
        network_args(p)
        p.add_argument("--outcomes", required=True, type=_existing)

    def grid_args(p):
        p.add_argument("--grid-p", default="0.01:0.99:0.01")
        p.add_argument("--grid-q", default="0.01:0.99:0.01")

    p = sub.add_parser("simulate", help="simulate outcome panels")
    network_args(p)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--q", type=_prob, required=True)
    p.add_argument("--T", type=int, default=4)
    p.add_argument("--seed", type=int, default=1, help="run index (>= 1)")
    p.add_argument("--ip-fraction", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--info", help="also write the latent information panel")
    p.add_argument("--ips-out", help="write the drawn IP subset")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="closed-form reception rates per agent")
    network_args(p)
    p.add_argument("--q", type=_prob, required=True)
    p.add_argument("--T", type=int, default=4)
    p.add_argument("--check-oracle", action="store_true")
    p.add_argument("--max-enum", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("objective", help="evaluate an objective at one point")
    sample_args(p)
    p.add_argument("--method", choices=("na", "2m"), default="na")
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--q", type=_prob, required=True)
    p.add_argument("--weights")
    p.add_argument("--out")
    p.set_defaults(func=cmd_objective)

    p = sub.add_parser("surface", help="export the objective on a grid")
    sample_args(p)
    grid_args(p)
    p.add_argument("--method", choices=("na", "2m"), default="na")
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="also render a contour PNG")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("estimate", help="grid-search estimate with covariance")
    sample_args(p)
    grid_args(p)
    p.add_argument("--method", choices=("na", "2m", "both"), default="na")
    p.add_argument("--omega", choices=tuple(OMEGA))
    p.add_argument("--refine", action="store_true")
    p.add_argument("--profile", action="store_true", help="profile out p (method na)")
    p.add_argument("--weights")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("mc", help="Monte Carlo study")
    p.add_argument("--config", required=True, type=_existing)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("check", help="oracle and derivative self-checks")
    p.add_argument("--max-enum", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        level = logging.WARNING - 10 * min(args.verbose, 2)
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        if args.threads is not None and args.threads < 1:
            raise CliError("--threads must be at least 1")
        args.func(args)
    except (CliError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        kind = type(exc).__name__
        msg = " ".join(str(exc).split())
        print(f"netdiff: error: {kind}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
