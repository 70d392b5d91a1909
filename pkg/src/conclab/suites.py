"""Named verification suites and the config-driven runner.

A config (YAML or JSON) selects suites and may override their parameters:

    seed: 7
    out: results
    suites: [binomial, minbasic]      # or "all"
    binomial: {ns: [100, 1000], refine: 3}

Unknown keys anywhere are rejected. Each suite writes ``<out>/<suite>.csv``
and contributes failure records ``{suite, case, expected, got}``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import binomial as bn
from . import distance as dist
from . import extremal as ex
from . import talagrand as tg
from .harness import ProductLaw, default_audit_config, derive_seed, verify_upper_envelopes
from .measures import TwoPoint, psi_p_norm, rademacher
from .oracles import grid_golden_min
from .report import ExperimentReport

SUITE_NAMES = ("binomial", "minbasic", "distance", "expmoment", "extremal", "envelopes")

DEFAULTS = {
    "binomial": {"ns": [100, 1000, 10000, 100000], "refine": 3, "oracle_n_max": 30, "median_n_max": 10000},
    "minbasic": {"instances": 1000},
    "distance": {"instances": 500, "sample_size": 200, "spread": 3.0},
    "expmoment": {"samples": 1000000, "ns": [2, 3, 4, 5, 6], "deltas": [0.5, 0.1]},
    "extremal": {"ns": [1000, 10000, 100000], "K": 1.0, "p": 2.0, "steps": 40, "c_b": ex.DEFAULT_C_B},
    "envelopes": {"samples": 1000000},
}


class ConfigError(ValueError):
    pass


@dataclass
class SuiteResult:
    name: str
    report: ExperimentReport
    failures: list = field(default_factory=list)

    def fail(self, case, expected, got):
        self.failures.append({"suite": self.name, "case": case, "expected": expected, "got": got})


def _num(x):
    """JSON-safe number."""
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def binomial_oracle_error(n_max: int) -> float:
    """Worst relative error of the log tail against rational enumeration, n <= n_max, theta in {0.1..0.9}."""
    worst = 0.0
    for n in range(1, n_max + 1):
        for th in [i / 10 for i in range(1, 10)]:
            ks = np.arange(n + 1)
            logs = bn._kernels.log_sf_batch(ks, n, th)
            # exact tails as suffix sums of the rational pmf
            pmf = [bn.binom_pmf_exact(n, th, j) for j in range(n + 1)]
            tail = Fraction(0)
            for k in range(n, -1, -1):
                tail += pmf[k]
                exact = float(tail)
                worst = max(worst, abs(math.exp(logs[k]) - exact) / exact)
    return worst


def run_binomial(cfg: dict, seed: int) -> SuiteResult:
    cols = ("n", "theta", "r", "exact_tail", "chernoff", "envelope", "ratio", "log_exact_tail", "log_envelope")
    res = SuiteResult("binomial", ExperimentReport("binomial", cols))
    worst = binomial_oracle_error(cfg["oracle_n_max"])
    if worst > 1e-12:
        res.fail("log tail vs exact oracle", "relative error <= 1e-12", worst)
    ns = np.arange(1, cfg["median_n_max"] + 1)
    th = np.round(np.arange(1, 100) / 100, 2)
    N, T = np.meshgrid(ns, th, indexing="ij")
    med = bn.binom_median_many(N, T)
    bad = (med < np.floor(N * T)) | (med > np.ceil(N * T))
    if bad.any():
        i = np.argwhere(bad)[0]
        res.fail("median sandwich", "floor(theta n) <= med <= ceil(theta n)", f"n={N[tuple(i)]}, theta={T[tuple(i)]}")
    cells = bn.binomial_lemma_cells(cfg["ns"])
    fit = bn.fit_binomial_lower(cells)
    held_out = bn.binomial_lemma_grid(cfg["ns"], refine=cfg["refine"])
    viol = bn.lower_envelope_violations(held_out, fit.fitted_value)
    if fit.fitted_value > 50 or viol:
        res.fail("lower envelope fit", "C_b <= 50 and no held-out violations",
                 {"C_b": fit.fitted_value, "violations": len(viol)})
    for row in bn.lower_envelope_rows(bn.binomial_lemma_grid(cfg["ns"]), fit.fitted_value):
        res.report.add(**row)
    res.report.meta.update(C_b=fit.fitted_value, worst_cell=str(fit.worst_point), held_out=len(held_out),
                           oracle_rel_err=worst)
    return res


def run_minbasic(cfg: dict, seed: int) -> SuiteResult:
    cols = ("kind", "case", "a", "b", "c0R2", "closed_form", "oracle", "abs_err", "seed")
    res = SuiteResult("minbasic", ExperimentReport("minbasic", cols))
    suite_seed = derive_seed(seed, "minbasic")
    rng = np.random.default_rng(suite_seed)
    count = cfg["instances"]
    for i in range(count):
        a, b = sorted(rng.uniform(-10, 10, size=2))[::-1]
        cr2 = 10 ** rng.uniform(-3, 3)
        val, _ = tg._min_basic(a, b, cr2)
        _, oracle = grid_golden_min(lambda lam: float(tg.min_basic_objective(lam, a, b, cr2)))
        err = abs(val - oracle)
        res.report.add(kind="min_basic", case=i, a=a, b=b, c0R2=cr2, closed_form=val, oracle=oracle, abs_err=err, seed=suite_seed)
        if err > 1e-9:
            res.fail(f"min_basic {i}", oracle, val)
    for i in range(count):
        h_t, h_y = rng.uniform(-10, 10, size=2)
        kappa = 10 ** rng.uniform(-2, 1)
        dt2 = 10 ** rng.uniform(-2, 1)
        val = tg.h_cost_value(h_t, h_y, kappa, dt2)
        _, oracle = grid_golden_min(lambda lam: float(tg.min_basic_objective(lam, h_y, h_t, kappa * dt2)))
        err = abs(val - oracle)
        res.report.add(kind="h_cost", case=i, a=h_y, b=h_t, c0R2=kappa * dt2, closed_form=val, oracle=oracle,
                       abs_err=err, seed=suite_seed)
        if err > 1e-9:
            res.fail(f"h_cost {i}", oracle, val)
    for i in range(count):
        h_t = rng.uniform(-10, 10)
        h_y = h_t + rng.uniform(0, 10)
        kappa = 10 ** rng.uniform(-2, 1)
        dt2 = 10 ** rng.uniform(-2, 1)
        Q = 4 * kappa * dt2 * (1 + 10 ** rng.uniform(-3, 2))
        bound = tg.remark_bound_value(h_t, h_y, kappa, dt2, Q)
        h = tg.h_cost_value(h_t, h_y, kappa, dt2)
        res.report.add(kind="remark", case=i, a=h_y, b=h_t, c0R2=kappa * dt2, closed_form=bound, oracle=h,
                       abs_err=max(h - bound, 0.0), seed=suite_seed)
        if bound < h - 1e-12 * (1 + abs(h)):
            res.fail(f"remark bound {i}", f">= {h}", bound)
    return res


def run_distance(cfg: dict, seed: int) -> SuiteResult:
    cols = ("case", "dim", "vertices", "hull_distance", "distc_10", "distc_50", "distc_200", "excess", "max_gap", "seed")
    res = SuiteResult("distance", ExperimentReport("distance", cols))
    suite_seed = derive_seed(seed, "distance")
    rng = np.random.default_rng(suite_seed)
    size = cfg["sample_size"]
    for i in range(cfg["instances"]):
        S, x = dist.random_hull_instance(rng, spread=cfg["spread"])
        hull = dist.dist_to_hull(x, S)
        H = dist.hull_sample(S, size, rng)
        values, gaps = [], [hull.gap]
        for m in (10, 50, size):
            cert = dist.dist_c(x, H[:m])
            problems = cert.violations(np.abs(H[:m] - x))
            if problems:
                res.fail(f"certificate {i}/{m}", "valid certificate", problems)
            values.append(cert.distance)
            gaps.append(cert.gap)
        excess = values[-1] - hull.distance
        if any(b > a + 1e-12 for a, b in zip(values, values[1:])):
            res.fail(f"monotone {i}", "nonincreasing in sample size", values)
        if excess < -1e-9 or excess > 5e-2 * (1 + hull.distance):
            res.fail(f"convergence {i}", f"excess in [0, {5e-2 * (1 + hull.distance)}]", excess)
        if max(gaps) > 1e-10:
            res.fail(f"gap {i}", "<= 1e-10", max(gaps))
        res.report.add(case=i, dim=S.dim, vertices=len(S), hull_distance=hull.distance, distc_10=values[0],
                       distc_50=values[1], distc_200=values[2], excess=excess, max_gap=max(gaps), seed=suite_seed)
    return res


def discrete_support(law, n: int):
    """All points of {atoms}^n with their exact probabilities."""
    from .harness import _atoms
    import itertools

    atoms = _atoms(law)
    pts, probs = [], []
    for combo in itertools.product(atoms, repeat=n):
        pts.append([v for v, _ in combo])
        probs.append(math.prod((p for _, p in combo), start=Fraction(1)))
    return np.array(pts), probs


def random_event(law, n: int, rng: np.random.Generator, min_mass: float = 0.05, extra_points: int = 3):
    """Finite A: random support atoms until P{X in A} >= min_mass, plus a few off-support points."""
    pts, probs = discrete_support(law, n)
    order = rng.permutation(len(pts))
    chosen, mass = [], Fraction(0)
    for j in order:
        chosen.append(j)
        mass += probs[j]
        if mass >= Fraction(min_mass).limit_denominator(10**6) and len(chosen) >= 1:
            break
    A = pts[chosen]
    if extra_points:
        A = np.concatenate([A, rng.normal(size=(extra_points, n)) * 2.0])
    return dist.PointSet(A), float(mass)


def expmoment_cases(ns, deltas, seed):
    for law_name, law in (("rademacher", rademacher()), ("two_point_0.2", TwoPoint(0.2, 1.0))):
        K = psi_p_norm(law, 2.0).norm
        for n in ns:
            rng = np.random.default_rng(derive_seed(seed, "event", law_name, n))
            A, mass = random_event(law, n, rng)
            for delta in deltas:
                yield law_name, law, K, n, A, mass, delta


def run_expmoment(cfg: dict, seed: int) -> SuiteResult:
    cols = ("law", "n", "delta", "K", "L", "p_A", "statistic", "half_width", "upper99", "bound", "samples", "seed")
    res = SuiteResult("expmoment", ExperimentReport("expmoment", cols))
    for law_name, law, K, n, A, mass, delta in expmoment_cases(cfg["ns"], cfg["deltas"], seed):
        L = tg.choice_of_L(n, delta, K)
        case_seed = derive_seed(seed, "expmoment", law_name, n)
        X = ProductLaw.iid(law, n).sample(cfg["samples"], case_seed)
        stat = tg.exp_moment_statistic(X, A, L)
        bound = 4.0 / (mass * delta)
        res.report.add(law=law_name, n=n, delta=delta, K=K, L=L, p_A=mass, statistic=stat.mean,
                       half_width=stat.half_width, upper99=stat.upper, bound=bound, samples=stat.count, seed=case_seed)
        if stat.overflow or stat.upper > bound:
            res.fail(f"{law_name} n={n} delta={delta}", f"<= {bound}", stat.upper)
    return res


def run_extremal(cfg: dict, seed: int) -> SuiteResult:
    res = SuiteResult("extremal", ExperimentReport("extremal", ex.SWEEP_COLUMNS))
    K, p, c_b = cfg["K"], cfg["p"], cfg["c_b"]
    fitted = {}
    for n in cfg["ns"]:
        grid = ex.window_grid(n, K, p, cfg["steps"], c_b)
        rep = ex.optimality_sweep(n, K, p, grid, c_b=c_b, seed=seed)
        fitted[n] = rep.meta["C"]
        for row in rep.rows:
            res.report.add(**row)
            inst = ex.make_instance(n, row["theta"], K, p)
            lo = inst.alpha * math.sqrt(math.floor(inst.theta * n))
            hi = inst.alpha * math.sqrt(math.ceil(inst.theta * n))
            if not (lo <= inst.median_norm <= hi):
                res.fail(f"median sandwich n={n} t={row['t']}", [lo, hi], inst.median_norm)
            if inst.median_norm < row["t"]:
                res.fail(f"median dominates t n={n} t={row['t']}", f">= {row['t']}", inst.median_norm)
            norm = psi_p_norm(inst.law, p).norm
            if norm > K * (1 + 1e-9):
                res.fail(f"psi norm n={n} t={row['t']}", f"<= {K}", norm)
        if rep.meta["C"] > 50:
            res.fail(f"fitted C n={n}", "<= 50", rep.meta["C"])
    values = list(fitted.values())
    if max(values) > 2 * min(values):
        res.fail("fitted C stability", "max/min <= 2", {str(k): v for k, v in fitted.items()})
    slopes = two_level_slopes()
    res.report.meta.update(fitted=fitted, slopes=slopes)
    if not (1.5 <= slopes["small"] <= 2.5):
        res.fail("two-level slope small t", "[1.5, 2.5]", slopes["small"])
    if not (0.75 <= slopes["large"] <= 1.25):
        res.fail("two-level slope large t", "[0.75, 1.25]", slopes["large"])
    return res


def two_level_slopes(n: int = 100000, K: float = 1.0, p: float = 1.0, points: int = 12, c_b: float = ex.DEFAULT_C_B):
    """Local log-log slopes of -log tail: extremal vector below t_switch/4, single coordinate above 4 t_switch.

    The small-t window starts at the left end of theta(t)'s window, since
    below it the tail is held constant.
    """
    from .envelopes import EnvelopeParams, regime_crossover

    cross = regime_crossover(EnvelopeParams(K, p, n))
    lo, _ = ex.case1_window(n, K, p, c_b)
    small_t = np.geomspace(lo, cross.t_switch / 4, points)
    small_y = [-ex.log_norm_tail_exact(ex.make_instance(n, ex.theta_of_t(n, t, K, p, c_b), K, p), t, "upper")
               for t in small_t]
    large_t = np.geomspace(4 * cross.t_switch, 40 * cross.t_switch, points)
    large_y = [-ex.log_coordinate_tail(t, K, p) for t in large_t]
    return {"small": ex.local_slope(small_t, small_y), "large": ex.local_slope(large_t, large_y),
            "small_window": [float(small_t[0]), float(small_t[-1])], "t_switch": cross.t_switch}


def run_envelopes(cfg: dict, seed: int) -> SuiteResult:
    rep = verify_upper_envelopes(default_audit_config(cfg["samples"], seed))
    res = SuiteResult("envelopes", rep)
    for row in rep.rows:
        if row["violation"]:
            res.fail(f"{row['theorem']} {row['law']} {row['function']} t={row['t']} {row['side']}",
                     f"<= {row['envelope']}", row["ci_high"])
    if not rep.meta["preset_ok"]:
        res.fail("preset c = 1/2048", "admissible for t >= C' K sqrt(log n)", rep.meta["preset_C_prime"])
    return res


RUNNERS = {
    "binomial": run_binomial,
    "minbasic": run_minbasic,
    "distance": run_distance,
    "expmoment": run_expmoment,
    "extremal": run_extremal,
    "envelopes": run_envelopes,
}


# ---------------------------------------------------------------------------
# config and runner
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            import yaml

            data = yaml.safe_load(text)
    except Exception as exc:  # both parsers raise their own error types
        raise ConfigError(f"{path}: cannot parse: {exc}") from None
    if data is None:
        data = {}
    return normalize_config(data)


def normalize_config(data) -> dict:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    allowed = {"seed", "out", "suites", *SUITE_NAMES}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    suites = data.get("suites", "all")
    if suites == "all":
        suites = list(SUITE_NAMES)
    if isinstance(suites, str):
        suites = [suites]
    if not isinstance(suites, list) or any(s not in SUITE_NAMES for s in suites):
        raise ConfigError(f"suites must be 'all' or a list drawn from {list(SUITE_NAMES)}, got {suites!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    out = {"seed": seed, "out": str(data.get("out", "results")), "suites": suites}
    for name in SUITE_NAMES:
        params = dict(DEFAULTS[name])
        given = data.get(name, {}) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        bad = sorted(set(given) - set(params))
        if bad:
            raise ConfigError(f"unknown keys in section {name!r}: {bad}")
        params.update(given)
        out[name] = params
    return out


def run_suites(config: dict) -> tuple[dict, list]:
    """Run the selected suites, write CSVs, return ({suite: SuiteResult}, failures)."""
    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    results, failures = {}, []
    for name in config["suites"]:
        res = RUNNERS[name](config[name], config["seed"])
        res.report.write_csv(out_dir / f"{name}.csv")
        results[name] = res
        failures.extend(res.failures)
    return results, failures


def run_experiment(config_path) -> int:
    """0 if every assertion passes, 1 with a JSON failure record, 2 if the config does not parse."""
    import sys

    try:
        config = load_config(config_path)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    _, failures = run_suites(config)
    return report_failures(failures, Path(config["out"]))


def report_failures(failures, out_dir: Path) -> int:
    import sys

    if not failures:
        return 0
    record = json.dumps([{k: _jsonable(v) for k, v in f.items()} for f in failures], indent=1, sort_keys=True)
    (out_dir / "failures.json").write_text(record + "\n", encoding="utf-8")
    print(record, file=sys.stderr)
    return 1


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (int, float, str, bool)) or v is None or isinstance(v, (np.floating, np.integer)):
        return _num(v)
    return str(v)
