"""Command-line entry point: ``conclab <command> ...``.

Numeric results go to stdout as JSON (one object per invocation) unless the
command writes a CSV. Errors in the inputs exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import binomial as bn
from . import distance as dist
from . import envelopes as env
from . import extremal as ex
from . import suites
from . import talagrand as tg
from .harness import HarnessError, ProductLaw, estimate_tail, parse_function
from .measures import LawError, parse_law
from .report import ExperimentReport

INPUT_ERRORS = (
    ValueError, LawError, HarnessError, bn.BinomialError, env.EnvelopeError, ex.ExtremalError,
    dist.DistanceError, tg.TalagrandError, suites.ConfigError, OSError,
)


def default_seed() -> int:
    raw = os.environ.get("CONCLAB_SEED", "0")
    try:
        return int(raw, 0)
    except ValueError:
        raise SystemExit(f"CONCLAB_SEED must be an integer, got {raw!r}") from None


def _emit(obj) -> None:
    print(json.dumps(suites._jsonable(obj), sort_keys=True))


def _constants(pairs) -> dict:
    out = {}
    for item in pairs or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--c expects name=value, got {item!r}")
        if name not in env.CONSTANT_NAMES:
            raise ValueError(f"unknown constant {name!r}; known: {', '.join(env.CONSTANT_NAMES)}")
        out[name] = float(value)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.config:
        return suites.run_experiment(args.config)
    data = {"suites": args.suite, "seed": args.seed, "out": args.out}
    if args.samples is not None:
        data["expmoment"] = {"samples": args.samples}
        data["envelopes"] = {"samples": args.samples}
    config = suites.normalize_config(data)
    results, failures = suites.run_suites(config)
    for name, res in results.items():
        status = "ok" if not res.failures else f"{len(res.failures)} failure(s)"
        print(f"{name}: {len(res.report.rows)} rows, {status}")
    return suites.report_failures(failures, Path(config["out"]))


def cmd_mc_tail(args) -> int:
    law = ProductLaw.iid(parse_law(args.law), args.n)
    f = parse_function(args.f, args.n)
    est = estimate_tail(f, law, args.t, args.side, args.samples, args.seed, method=args.method)
    _emit({"estimate": est.estimate, "ci_low": est.ci_low, "ci_high": est.ci_high, "method": est.method,
           "samples": est.samples, "seed": est.seed, "median": est.median, "hits": est.hits})
    return 0


def cmd_binom_tail(args) -> int:
    q = bn.BinomQuery(args.n, args.theta, args.k)
    log_tail = bn.log_binom_tail(q.n, q.theta, q.k)
    out = {"n": q.n, "theta": q.theta, "k": q.k, "tail": math.exp(log_tail), "log_tail": log_tail,
           "chernoff": bn.chernoff_upper(q)}
    if args.exact:
        out["exact"] = float(bn.binom_tail_exact(q.n, q.theta, q.k))
    _emit(out)
    return 0


FIT_SPEC_KEYS = {"ns", "mode", "refine", "theta_count", "step", "ratio", "theta_max", "min_mean", "cap", "rtol",
                 "held_out_refine"}


def load_grid_spec(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        spec = json.loads(text)
    else:
        import yaml

        spec = yaml.safe_load(text)
    if not isinstance(spec, dict):
        raise ValueError("grid spec must be a mapping")
    unknown = sorted(set(spec) - FIT_SPEC_KEYS)
    if unknown:
        raise ValueError(f"unknown grid-spec keys: {unknown}")
    if "ns" not in spec:
        raise ValueError("grid spec needs 'ns'")
    return spec


def cmd_fit(args) -> int:
    spec = load_grid_spec(args.grid_spec)
    ns = [int(n) for n in spec["ns"]]
    theta_max = float(spec.get("theta_max", 0.05))
    min_mean = float(spec.get("min_mean", 10.0))
    mode = spec.get("mode", "cells")
    if mode == "cells":
        grid = bn.binomial_lemma_cells(ns, step=float(spec.get("step", 0.1)), ratio=float(spec.get("ratio", 1.05)),
                                       theta_max=theta_max, min_mean=min_mean)
    elif mode == "points":
        grid = bn.binomial_lemma_grid(ns, theta_count=int(spec.get("theta_count", 6)),
                                      refine=int(spec.get("refine", 1)), theta_max=theta_max, min_mean=min_mean)
    else:
        raise ValueError(f"mode must be 'cells' or 'points', got {mode!r}")
    fit = bn.fit_binomial_lower(grid, cap=float(spec.get("cap", 1e4)), rtol=float(spec.get("rtol", 1e-3)))
    held_refine = int(spec.get("held_out_refine", 3))
    held = bn.binomial_lemma_grid(ns, theta_count=int(spec.get("theta_count", 6)), refine=held_refine,
                                  theta_max=theta_max, min_mean=min_mean)
    violations = bn.lower_envelope_violations(held, fit.fitted_value)
    if args.out:
        rep = ExperimentReport("binomial", tuple(bn.lower_envelope_rows(held[:1], 1.0)[0]))
        for row in bn.lower_envelope_rows(held, fit.fitted_value):
            rep.add(**row)
        rep.write_csv(args.out)
    _emit({"inequality": args.inequality, "constant": fit.constant_name, "fitted_value": fit.fitted_value,
           "worst_point": str(fit.worst_point), "grid_size": len(grid), "held_out_size": len(held),
           "held_out_violations": len(violations)})
    return 0 if not violations else 1


def cmd_envelope(args) -> int:
    params = env.EnvelopeParams(args.K, args.p, args.n, _constants(args.c))
    rep = ExperimentReport("envelope", ("theorem", "n", "K", "p", "t", "value", "term"))
    for t in args.t:
        term = ""
        if args.theorem == "psip":
            value, term = env.psip_envelope(params, t)
        elif args.theorem == "subgaussian":
            value = env.subgaussian_envelope(params, t)
        elif args.theorem == "lower-psip":
            value = env.lower_envelope(params, t, "psip")
        else:
            value = env.lower_envelope(params, t, "subgaussian")
        rep.add(theorem=args.theorem, n=args.n, K=args.K, p=args.p, t=t, value=value, term=term)
    if args.out:
        rep.write_csv(args.out)
    else:
        sys.stdout.write(rep.to_csv())
    return 0


def cmd_hcost(args) -> int:
    inp = tg.HCostInput(0.0, args.dt, args.ht, args.hy, args.kappa)
    _emit({"h": tg.h_cost(inp)})
    return 0


def cmd_choice_of_l(args) -> int:
    _emit({"L": tg.choice_of_L(args.n, args.delta, args.K)})
    return 0


def cmd_distc(args) -> int:
    S = dist.read_points(args.set_file)
    x = dist.parse_point(args.point)
    cert = dist.dist_c(x, S)
    out = {"dist_c": cert.distance, "gap": cert.gap, "weights": cert.weights.tolist(),
           "witness": cert.witness.tolist()}
    if args.hull:
        h = dist.dist_to_hull(x, S)
        out.update(dist_to_hull=h.distance, nearest=h.nearest.tolist(), hull_gap=h.gap)
    _emit(out)
    return 0


def cmd_extremal_sweep(args) -> int:
    lo, hi = ex.case1_window(args.n, args.K, args.p, args.c_b)
    t_min = lo if args.t_min is None else args.t_min
    t_max = hi if args.t_max is None else args.t_max
    if not (0 < t_min <= t_max):
        raise ValueError(f"need 0 < t-min <= t-max, got {t_min}, {t_max}")
    grid = np.geomspace(t_min, t_max, args.steps)
    rep = ex.optimality_sweep(args.n, args.K, args.p, grid, c_b=args.c_b, min_n=args.min_n, seed=args.seed)
    rep.write_csv(args.out)
    _emit({"C_upper": rep.meta["C_upper"], "C_lower": rep.meta["C_lower"], "C": rep.meta["C"],
           "window": list(rep.meta["window"]), "rows": len(rep.rows), "out": args.out})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    seed = default_seed()
    p = argparse.ArgumentParser(prog="conclab", description="Concentration-inequality verification toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify", help="run verification suites")
    s.add_argument("--suite", choices=[*suites.SUITE_NAMES, "all"], default="all")
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--out", default="results")
    s.add_argument("--samples", type=int, help="override Monte Carlo sample counts")
    s.add_argument("--config", help="YAML/JSON config file (overrides the other flags)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("mc-tail", help="Monte Carlo deviation tail with a Clopper-Pearson interval")
    s.add_argument("--law", required=True, help="law spec, e.g. rademacher or two_point:theta=0.2,alpha=1")
    s.add_argument("--f", required=True, help="euclidean_norm | max_coordinate | linear[:a1,...|:uniform] | "
                                              "dist_to_convex:<file>")
    s.add_argument("--n", type=int, default=1, help="number of coordinates")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--side", choices=["upper", "lower"], default="upper")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--method", choices=["mc", "exact", "auto"], default="mc")
    s.set_defaults(func=cmd_mc_tail)

    s = sub.add_parser("binom-tail", help="P{Bin(n, theta) >= k}")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--theta", type=float, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--exact", action="store_true", help="also evaluate the tail in exact rational arithmetic")
    s.set_defaults(func=cmd_binom_tail)

    s = sub.add_parser("fit", help="fit an inequality constant on a grid")
    s.add_argument("--inequality", choices=["binomial-lower"], required=True)
    s.add_argument("--grid-spec", required=True, help="YAML/JSON file with ns, mode (cells|points), ...")
    s.add_argument("--out", help="CSV of the held-out grid at the fitted constant")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("envelope", help="evaluate tail envelopes")
    s.add_argument("--theorem", choices=["psip", "subgaussian", "lower-psip", "lower-subgaussian"], required=True)
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--t", type=float, nargs="+", required=True)
    s.add_argument("--K", type=float, default=1.0)
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--c", nargs="*", metavar="NAME=VALUE", help="constants: c, c_p, c_tilde, C_tilde")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_envelope)

    s = sub.add_parser("hcost", help="H(t, y) = min over lambda of the interpolation cost")
    s.add_argument("--ht", type=float, required=True)
    s.add_argument("--hy", type=float, required=True)
    s.add_argument("--kappa", type=float, required=True)
    s.add_argument("--dt", type=float, required=True, help="distance |t - y|")
    s.set_defaults(func=cmd_hcost)

    s = sub.add_parser("choice-of-l", help="L = sqrt(512 K^2 log(2 + n / log(2 + 1/delta)))")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--K", type=float, required=True)
    s.set_defaults(func=cmd_choice_of_l)

    s = sub.add_parser("distc", help="modified convex distance to a finite set")
    s.add_argument("--point", required=True, help='"x1,x2,..."')
    s.add_argument("--set-file", required=True)
    s.add_argument("--hull", action="store_true", help="also report the Euclidean distance to the hull")
    s.set_defaults(func=cmd_distc)

    s = sub.add_parser("extremal-sweep", help="exact tails of the extremal two-point construction")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--K", type=float, default=1.0)
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--t-min", type=float, help="default: left end of the admissible window")
    s.add_argument("--t-max", type=float, help="default: right end of the admissible window")
    s.add_argument("--steps", type=int, default=40)
    s.add_argument("--c-b", type=float, default=ex.DEFAULT_C_B)
    s.add_argument("--min-n", type=int, default=ex.DEFAULT_MIN_N)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extremal_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except suites.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
