"""Command-line runner: ``shrinklab run|list|acceptance``.

A run is described by a TOML file::

    operation = "energy-scan"
    seed = 7
    precision_bits = 1024

    [map]
    builtin = "doubling"

    [radius]
    kind = "power"
    alpha = 2

    [params]
    s_grid = [0.4, 0.6]

Results go to ``--out`` (default ``shrinklab-out``): one CSV per table and
``report.json`` echoing the configuration, including every default applied.
Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures.  ``SHRINKLAB_THREADS`` caps the number of worker threads.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import __version__
from .artifacts import csv_text, json_text, write_text
from .errors import ConfigError, NumericalFailure, ShrinkLabError
from .interval_maps import BUILTIN_MAPS, map_from_config, required_bits
from .precise import DEFAULT_BITS, PrecisePoint
from .rng import check_seed, make_rng

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
DEFAULT_OUT = "shrinklab-out"

OPERATIONS = {
    "density": "invariant density on an Ulam grid (bins)",
    "pressure": "pressure of [potential] (n_max, bins, bracket_tol)",
    "correlations": "correlation series of f, g (max_lag, estimator, samples, bins)",
    "return-times": "Manneville-Pomeau return times and growth exponent (N_returns, arithmetic)",
    "dimension": "dimension formula for [radius] (cap, N_check; optional box, energy tables)",
    "energy-scan": "Riesz energies of orbit-ball measures (s_grid, n_schedule, m_rule)",
    "box-count": "box-counting slope of a finite stage (K_start, N_balls, grid_levels, window)",
    "s0": "ball-scaling exponent of the Gibbs measure of [potential] (m_schedule, bins)",
    "intersect": "box-counting slope of two finite stages' intersection",
    "acceptance": "the acceptance suite (quick)",
}

_TOP_KEYS = {"operation", "seed", "precision_bits", "map", "potential", "radius", "params",
             "output"}


class Params:
    """Operation parameters that remember which defaults were applied."""

    def __init__(self, given: dict):
        self.given = dict(given or {})
        self.applied: dict = {}
        self._seen: set = set()

    def get(self, key, default=None):
        self._seen.add(key)
        if key in self.given:
            return self.given[key]
        self.applied[key] = default
        return default

    def check_unused(self):
        extra = set(self.given) - self._seen
        if extra:
            raise ConfigError(f"unknown params: {sorted(extra)}")


class Run:
    """State shared by the operation handlers of one run."""

    def __init__(self, config: dict, seed: int, out: Path):
        unknown = set(config) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        self.config = config
        self.seed = seed
        self.out = out
        self.params = Params(config.get("params", {}))
        self.defaults: dict = {}
        self.bits = int(self._top("precision_bits", DEFAULT_BITS))
        if self.bits < 64:
            raise ConfigError("precision_bits must be at least 64")
        self.artifacts: list[str] = []
        self.manifest: dict | None = None
        self.rng = make_rng(seed)

    def _top(self, key, default):
        if key in self.config:
            return self.config[key]
        self.defaults[key] = default
        return default

    def section(self, key, required=True):
        if key not in self.config:
            if required:
                raise ConfigError(f"[{key}] table is required for operation "
                                  f"{self.config.get('operation')!r}")
            return None
        value = self.config[key]
        if not isinstance(value, dict):
            raise ConfigError(f"[{key}] must be a table")
        return value

    def tmap(self):
        return map_from_config(self.section("map"))

    def potential(self):
        from .thermodynamics import potential_from_config
        return potential_from_config(self.section("potential"))

    def radius(self):
        from .shrinking_targets import radius_from_config
        return radius_from_config(self.section("radius"))

    def point(self, tmap, raw, steps, label="x"):
        """Point from ``"1/3"``, ``0.3`` or ``"bits:hex"``; random from the seed if ``None``."""
        bits = max(self.bits, required_bits(tmap, steps))
        if raw is None:
            self.defaults[f"{label}_source"] = "random from seed"
            return PrecisePoint.random(self.rng, bits)
        if isinstance(raw, str) and ":" in raw:
            try:
                return PrecisePoint.from_hex(raw)
            except ValueError:
                raise ConfigError(f"cannot read hex point {raw!r}") from None
        return PrecisePoint.from_value(raw, bits)

    def write_csv(self, name, header, rows):
        write_text(self.out / name, csv_text(header, rows))
        self.artifacts.append(name)


# -- operation handlers -----------------------------------------------------

def _op_density(run: Run):
    from .thermodynamics import stationary_density, ulam_matrix
    tmap = run.tmap()
    bins = int(run.params.get("bins", 4096))
    dens = stationary_density(ulam_matrix(tmap, bins))
    run.write_csv("density.csv", ("bin_left", "bin_right", "density"), dens.rows())
    return {"bins": bins, "c_h": dens.c_h, "iterations": dens.iterations,
            "residual": dens.residual, "estimator": "ulam-power-iteration",
            "tolerance": 1e-12}


def _op_pressure(run: Run):
    from .thermodynamics import BRACKET_TOL, pressure
    tmap, pot = run.tmap(), run.potential()
    n_max = int(run.params.get("n_max", 2000))
    bins = int(run.params.get("bins", 4096))
    tol = float(run.params.get("bracket_tol", BRACKET_TOL))
    p = pressure(tmap, pot, n_max, bins, tol)
    run.write_csv("pressure_sequence.csv", ("n", "lower", "upper"),
                  [(k + 1, lo, up) for k, (lo, up) in
                   enumerate(zip(p.lower_sequence, p.upper_sequence))])
    return {"pressure": p.value, "lower": p.lower, "upper": p.upper, "n": p.n,
            "bins": p.bins, "potential": pot.describe(),
            "estimator": "ulam-transfer-growth", "tolerance": tol}


def _measure_from(run: Run, tmap, bins):
    kind = run.params.get("measure", "lebesgue")
    if kind == "lebesgue":
        return None
    if kind == "invariant":
        from .thermodynamics import stationary_density, ulam_matrix
        return stationary_density(ulam_matrix(tmap, bins)).measure
    if kind == "gibbs":
        from .thermodynamics import gibbs_model
        return gibbs_model(tmap, run.potential(), bins).mu
    raise ConfigError("params.measure must be lebesgue, invariant or gibbs")


def _op_correlations(run: Run):
    from .errors import InsufficientSignal
    from .statistics import BVObservable, correlation_series, decay_profile
    tmap = run.tmap()
    f = BVObservable.expression(str(run.params.get("f", "x")))
    g = BVObservable.expression(str(run.params.get("g", "x")))
    max_lag = int(run.params.get("max_lag", 20))
    estimator = run.params.get("estimator", "quadrature")
    bins = int(run.params.get("bins", 4096))
    samples = int(run.params.get("samples", 100_000))
    measure = _measure_from(run, tmap, bins)
    series = correlation_series(tmap, f, g, max_lag, measure, estimator,
                                samples=samples, seed=run.seed, bins=bins)
    run.write_csv("correlations.csv", ("lag", "value", "noise_floor"), series.rows())
    out = {"estimator": estimator, "max_lag": max_lag, "tolerance": "noise_floor column"}
    try:
        prof = decay_profile(series)
        out["decay"] = {"fit_rate": prof.fit_rate, "C_sum": prof.C_sum,
                        "usable_lags": list(prof.usable_lags)}
    except InsufficientSignal as exc:
        out["decay"] = {"error": exc.code, "message": str(exc)}
    return out


def _op_return_times(run: Run):
    from .statistics import return_sum_exponent
    tmap = run.tmap()
    N = int(run.params.get("N_returns", 10_000))
    arithmetic = run.params.get("arithmetic", "float")
    max_steps = int(run.params.get("max_steps", 10 ** 9))
    raw_x = run.params.get("x", None)
    x = None
    if raw_x is not None:
        x = PrecisePoint.from_hex(raw_x) if isinstance(raw_x, str) and ":" in raw_x \
            else PrecisePoint.from_value(raw_x, run.bits)
    res = return_sum_exponent(tmap, x, N, seed=run.seed, max_steps=max_steps,
                              arithmetic=arithmetic, bits=run.bits)
    run.write_csv("return_times.csv", ("k", "R_k", "partial_sum"), res.series.rows())
    return {"gamma": res.gamma, "skipped_starts": res.skipped_starts, "start": res.start,
            "N_returns": N, "arithmetic": arithmetic,
            "estimator": "log-log slope over the last decade", "fit_points": len(res.fit_points)}


def _shrinking_manifest(run: Run, tmap, x, radius, m_rule_name):
    run.manifest = {"map": tmap.describe(), "x": [p.hex() for p in x] if isinstance(x, list)
                    else x.hex(), "radius": radius.describe(), "m_rule": m_rule_name,
                    "seed": run.seed, "precision_bits": run.bits}
    write_text(run.out / "manifest.json", json_text(run.manifest))
    run.artifacts.append("manifest.json")


def _box_rows(box):
    return [row + (bool(u),) for row, u in zip(box.rows(), box.used)]


def _box_summary(box, window):
    return {"slope": box.slope, "stderr": box.stderr, "r_squared": box.r_squared,
            "levels_used": [int(g) for g in box.levels[box.used]], "window": window,
            "estimator": "dyadic box counting", "saturation": 0.5, "sparse_count": 32}


def _op_dimension(run: Run):
    from .shrinking_targets import dimension_formula
    r = run.radius()
    cap = float(run.params.get("cap", 1.0))
    N_check = int(run.params.get("N_check", 10 ** 6))
    out = {"formula_s": dimension_formula(r, cap, N_check), "cap": cap,
           "estimator": "closed form" if r.kind != "table" else "slope bisection",
           "tolerance": 0.01 if r.kind == "table" else 0.0}
    box = run.params.get("box", None)
    if box:
        out["empirical_box"] = _box_op(run, dict(box), r, name="box_count.csv")
    energy = run.params.get("energy", None)
    if energy:
        out["energy_dichotomy"] = _energy_op(run, dict(energy), r)
    return out


def _energy_op(run: Run, p: dict, r):
    from .shrinking_targets import BOUNDED_SLOPE, DIVERGENT_SLOPE, energy_scan, m_rule_from_config
    tmap = run.tmap()
    sub = Params(p)
    s_grid = [float(s) for s in sub.get("s_grid", [0.2, 0.3, 0.4, 0.5, 0.6, 0.7])]
    schedule = [int(n) for n in sub.get("n_schedule", [2 ** k for k in range(6, 13)])]
    rule, rule_name = m_rule_from_config(sub.get("m_rule", "sqrt"))
    low = float(sub.get("bounded_slope", BOUNDED_SLOPE))
    high = float(sub.get("divergent_slope", DIVERGENT_SLOPE))
    raw_x = sub.get("x", None)
    sub.check_unused()
    x = run.point(tmap, raw_x, max(schedule))
    scan = energy_scan(tmap, x, r, s_grid, schedule, rule, low, high)
    run.write_csv("energy.csv", ("s", "n", "I_s", "slope", "verdict"), scan.rows())
    _shrinking_manifest(run, tmap, x, r, rule_name)
    run.defaults.update({f"energy.{k}": v for k, v in sub.applied.items()})
    return {"s_grid": s_grid, "n_schedule": schedule, "slopes": scan.slopes.tolist(),
            "verdicts": list(scan.verdicts), "predictor_slopes": scan.predictor_slopes.tolist(),
            "thresholds": {"bounded": low, "divergent": high}, "m_rule": rule_name,
            "estimator": "exact pairwise energy, log-log slope"}


def _box_op(run: Run, p: dict, r, name, intersect=False):
    from .shrinking_targets import box_counting_dimension, intersection_experiment
    tmap = run.tmap()
    sub = Params(p)
    N = int(sub.get("N_balls", 2 ** 16))
    K = int(sub.get("K_start", 2 ** 8))
    levels = sub.get("grid_levels", None)
    window = sub.get("window", "auto")
    xs = [sub.get("x", None)] + ([sub.get("x2", None)] if intersect else [])
    sub.check_unused()
    points = []
    for label, raw in zip(("x", "x2"), xs):
        points.append(run.point(tmap, raw, N, label))
    if intersect:
        box = intersection_experiment(tmap, points[0], points[1], r, K, N, levels, window)
    else:
        box = box_counting_dimension(tmap, points[0], r, K, N, levels, window)
    run.write_csv(name, ("level", "delta", "count", "used"), _box_rows(box))
    _shrinking_manifest(run, tmap, points if intersect else points[0], r, "none")
    run.defaults.update({f"box.{k}": v for k, v in sub.applied.items()})
    return _box_summary(box, window)


def _nested(run: Run, keys):
    """Lift top-level ``params`` keys into a sub-table for the shared handlers."""
    for k in keys:
        run.params._seen.add(k)
    return {k: run.params.given[k] for k in keys if k in run.params.given}


def _op_energy_scan(run: Run):
    keys = ("s_grid", "n_schedule", "m_rule", "bounded_slope", "divergent_slope", "x")
    return _energy_op(run, _nested(run, keys), run.radius())


def _op_box_count(run: Run, intersect=False):
    keys = ("N_balls", "K_start", "grid_levels", "window", "x") + (("x2",) if intersect else ())
    name = "intersection.csv" if intersect else "box_count.csv"
    return _box_op(run, _nested(run, keys), run.radius(), name, intersect)


def _op_s0(run: Run):
    from .thermodynamics import ball_scaling_check, gibbs_model, pressure, s0_estimate
    tmap, pot = run.tmap(), run.potential()
    schedule = [int(m) for m in run.params.get("m_schedule", [20])]
    bins = int(run.params.get("bins", 2 ** 14))
    checks = [float(s) for s in run.params.get("check_s", [])]
    P = pressure(tmap, pot, bins=min(bins, 4096)).value
    est = s0_estimate(tmap, pot, P, schedule)
    rows = [(m, est.inf_quotients[m], est.thetas[m], est.distortion[m]) for m in sorted(est.thetas)]
    run.write_csv("s0.csv", ("m", "inf_quotient", "theta", "distortion"), rows)
    out = {"s0": est.value, "pressure": P, "m_schedule": schedule,
           "estimator": "max over m of inf cylinder quotient"}
    if checks:
        mu = gibbs_model(tmap, pot, bins).mu
        scal = [ball_scaling_check(mu, s, seed=run.seed) for s in checks]
        run.write_csv("ball_scaling.csv", ("s", "excess", "c_s", "bounded"),
                      [(b.s, b.excess, b.c_s, b.bounded) for b in scal])
        out["ball_scaling"] = [{"s": b.s, "excess": b.excess, "bounded": b.bounded,
                                "threshold": b.threshold} for b in scal]
    return out


def _op_acceptance(run: Run):
    from .acceptance import run_acceptance
    quick = bool(run.params.get("quick", False))
    results = run_acceptance(run.seed, quick, report=print)
    _write_acceptance_artifacts(run.out, results)
    run.artifacts += [n for r in results for n in sorted(r.artifacts)]
    return {"criteria": [r.summary() for r in results],
            "all_passed": all(r.passed for r in results)}


HANDLERS = {
    "density": _op_density,
    "pressure": _op_pressure,
    "correlations": _op_correlations,
    "return-times": _op_return_times,
    "dimension": _op_dimension,
    "energy-scan": _op_energy_scan,
    "box-count": _op_box_count,
    "s0": _op_s0,
    "intersect": lambda run: _op_box_count(run, intersect=True),
    "acceptance": _op_acceptance,
}


def _write_acceptance_artifacts(out: Path, results):
    for r in results:
        for name, text in sorted(r.artifacts.items()):
            write_text(out / name, text)


# -- entry points -----------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


def _output_dir(config, out):
    if out is not None:
        return Path(out)
    table = config.get("output", {})
    if isinstance(table, dict) and "dir" in table:
        return Path(table["dir"])
    return Path(DEFAULT_OUT)


def execute(config: dict, seed: int | None = None, out: Path | str | None = None) -> tuple[int, dict]:
    """Run one configured operation; returns ``(exit_code, report)``.

    ``seed`` and ``out`` override the config's ``seed`` and ``output.dir``.
    """
    out = _output_dir(config, out)
    started = time.perf_counter()
    report = {"version": __version__, "config": config}
    code = EXIT_OK
    try:
        op = config.get("operation")
        if op not in HANDLERS:
            raise ConfigError(f"unknown operation {op!r}; choose from {sorted(HANDLERS)}")
        seed_defaulted = seed is None and "seed" not in config
        if seed is None:
            seed = config.get("seed", 0)
        seed = check_seed(seed)
        run = Run(config, seed, out)
        if seed_defaulted:
            run.defaults["seed"] = seed
        report["seed"] = seed
        results = HANDLERS[op](run)
        run.params.check_unused()
        report["results"] = results
        report["defaults_applied"] = {**run.defaults, **run.params.applied}
        report["artifacts"] = run.artifacts
        if op == "acceptance" and not results["all_passed"]:
            code = EXIT_FAILED
    except ConfigError as exc:
        code = EXIT_CONFIG
        report["error"] = {"code": exc.code, "kind": "config", "message": str(exc)}
    except NumericalFailure as exc:
        code = EXIT_NUMERICAL
        report["error"] = {"code": exc.code, "kind": "numerical", "message": str(exc)}
    except ShrinkLabError as exc:
        code = EXIT_CONFIG
        report["error"] = {"code": exc.code, "kind": "input", "message": str(exc)}
    report["status"] = "ok" if code in (EXIT_OK, EXIT_FAILED) else "error"
    report["wall_time_s"] = time.perf_counter() - started
    write_text(out / "report.json", json_text(report))
    return code, report


def list_builtins() -> str:
    from .shrinking_targets import RADIUS_KINDS
    from .thermodynamics import POTENTIALS
    sections = [("maps", BUILTIN_MAPS), ("potentials", POTENTIALS),
                ("radius kinds", RADIUS_KINDS), ("operations", OPERATIONS)]
    lines = []
    for title, table in sections:
        lines.append(f"{title}:")
        lines += [f"  {key:<18} {table[key]}" for key in sorted(table)]
    return "\n".join(lines)


def _apply_thread_env():
    value = os.environ.get("SHRINKLAB_THREADS")
    if value:
        from ._kernels import set_threads
        try:
            set_threads(int(value))
        except ValueError:
            raise ConfigError("SHRINKLAB_THREADS must be an integer") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shrinklab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    run.add_argument("--out", type=Path, default=None,
                     help=f"artifact directory (default: output.dir or {DEFAULT_OUT})")
    sub.add_parser("list", help="list builtin maps, potentials, radius kinds, operations")
    acc = sub.add_parser("acceptance", help="run the acceptance suite")
    acc.add_argument("--quick", action="store_true", help="reduced problem sizes")
    acc.add_argument("--seed", type=int, default=0)
    acc.add_argument("--out", type=Path, default=Path("shrinklab-acceptance"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_thread_env()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "list":
        print(list_builtins())
        return EXIT_OK
    if args.command == "acceptance":
        config = {"operation": "acceptance", "seed": args.seed, "params": {"quick": args.quick}}
        code, _ = execute(config, args.seed, args.out)
        return code
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report = execute(config, args.seed, args.out)
    if "error" in report:
        print(f"error [{report['error']['code']}]: {report['error']['message']}", file=sys.stderr)
    else:
        print(f"{config['operation']}: wrote {len(report['artifacts'])} artifact(s) "
              f"and report.json to {_output_dir(config, args.out)}")
    return code


if __name__ == "__main__":
    sys.exit(main())
