"""Config-driven experiment runner.

    nhshift <selector> --config run.ini [--seed k] [--out dir]

The config is an INI file with sections [measure], [lattice], [kernel],
[goodness] and [tolerance].  Each run writes summary.json and CSV tables to
<out>/<selector>/ plus a metadata.json holding the timestamp and argv, so the
other files are byte-identical for the same config and seed.

Exit status: 0 when every check passes, 1 when a check fails, 2 for a bad config.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import haar_systems, really_good_probability, verify_half_identity
from .czop import OperatorMatrix, builtin_kernel, discretize_kernel
from .decompose import DecompositionParams, assemble_decomposition, really_good_weights
from .errors import ConfigurationError, InvalidParameterError, ResourceLimitError
from .experiments import (
    carleson_chain,
    haar_residuals,
    inner_envelope,
    ledger_residual,
    log2_slope,
    outer_envelope,
    t1_bound_report,
)
from .goodness import Equalizer, GoodnessParams, default_gamma, default_r, goodness_scan
from .lattice import enumerate_ensemble, sample_ensemble
from .measure import make_cantor_measure, random_measure, read_measure, uniform_grid_measure

SCHEMA = "v1"
SELECTORS = ("verify-haar", "goodness-scan", "verify-averaging", "decompose", "t1-bound", "full-suite")


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    d: int = 1
    N: int = 4
    m: float = 1.0
    measure_source: str = "generator"  # generator | file
    generator: str = "uniform"  # uniform | random | cantor
    measure_path: str | None = None
    cantor_depth: int = 4
    contraction: float = 1 / 3
    lattice_mode: str = "exact"  # exact | sample
    samples: int = 16
    kernel: str = "random"  # random | riesz | abs | identity | zero
    epsilon: float = 1.0
    delta: float | None = None
    r: int | str = "auto"
    gamma: float | str = "auto"
    seed: int = 0
    out: str = "nhshift_out"
    tolerances: dict = field(default_factory=lambda: {
        "haar": 1e-12, "averaging": 1e-10, "decompose": 1e-10,
    })


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def _auto_or(cast):
    return lambda s: s if s == "auto" else cast(s)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    text = p.read_text()
    if not text.strip():
        raise ConfigError(f"config file {p} is empty")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    if not parser.sections():
        raise ConfigError(f"config file {p} has no sections")
    c = ExperimentConfig()
    c.d = _get(parser, "lattice", "d", int, c.d)
    c.N = _get(parser, "lattice", "N", int, c.N)
    c.lattice_mode = _get(parser, "lattice", "mode", str, c.lattice_mode)
    c.samples = _get(parser, "lattice", "samples", int, c.samples)
    c.seed = _get(parser, "lattice", "seed", int, c.seed)
    c.m = _get(parser, "measure", "m", float, c.m)
    c.measure_source = _get(parser, "measure", "source", str, c.measure_source)
    c.generator = _get(parser, "measure", "generator", str, c.generator)
    c.measure_path = _get(parser, "measure", "path", str, c.measure_path)
    c.cantor_depth = _get(parser, "measure", "depth", int, c.cantor_depth)
    c.contraction = _get(parser, "measure", "contraction", float, c.contraction)
    c.kernel = _get(parser, "kernel", "type", str, c.kernel)
    c.epsilon = _get(parser, "kernel", "epsilon", float, c.epsilon)
    c.delta = _get(parser, "kernel", "delta", float, c.delta)
    c.r = _get(parser, "goodness", "r", _auto_or(int), c.r)
    c.gamma = _get(parser, "goodness", "gamma", _auto_or(float), c.gamma)
    c.out = _get(parser, "output", "dir", str, c.out)
    if parser.has_section("tolerance"):
        for key in parser.options("tolerance"):
            c.tolerances[key] = _get(parser, "tolerance", key, float, None)
    validate_config(c)
    return c


def validate_config(c: ExperimentConfig) -> None:
    checks = [
        (c.d in (1, 2, 3), f"d must be 1, 2 or 3, got {c.d}"),
        (2 <= c.N <= 16, f"N must lie in [2, 16], got {c.N}"),
        (c.m > 0, f"m must be positive, got {c.m}"),
        (c.measure_source in ("generator", "file"), f"unknown measure source {c.measure_source!r}"),
        (c.generator in ("uniform", "random", "cantor"), f"unknown generator {c.generator!r}"),
        (c.measure_source != "file" or c.measure_path, "measure source 'file' needs a path"),
        (c.lattice_mode in ("exact", "sample"), f"unknown lattice mode {c.lattice_mode!r}"),
        (c.samples >= 1, "samples must be positive"),
        (c.kernel in ("random", "riesz", "abs", "identity", "zero"), f"unknown kernel {c.kernel!r}"),
        (0 < c.epsilon <= 1, f"epsilon must lie in (0, 1], got {c.epsilon}"),
        (c.r == "auto" or c.r >= 1, f"r must be 'auto' or a positive integer, got {c.r}"),
        (c.gamma == "auto" or 0 < c.gamma < 1, f"gamma must be 'auto' or in (0, 1), got {c.gamma}"),
        (all(v is not None and v > 0 for v in c.tolerances.values()), "tolerances must be positive"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


# -- building blocks ----------------------------------------------------------


def build_measure(c: ExperimentConfig, rng):
    if c.measure_source == "file":
        return read_measure(c.measure_path)
    if c.generator == "uniform":
        return uniform_grid_measure(c.d, c.N, c.m)
    if c.generator == "random":
        return random_measure(c.d, c.N, c.m, rng)
    return make_cantor_measure(c.d, c.m, c.cantor_depth, c.contraction)


def build_ensemble(c: ExperimentConfig):
    if c.lattice_mode == "exact":
        return enumerate_ensemble(c.d, c.N)
    return sample_ensemble(c.d, c.N, c.samples, c.seed)


def build_operator(c: ExperimentConfig, mu, rng) -> OperatorMatrix:
    if c.kernel == "random":
        return OperatorMatrix.random(mu, rng)
    if c.kernel == "identity":
        return OperatorMatrix.identity(mu)
    if c.kernel == "zero":
        return OperatorMatrix.zero(mu)
    return discretize_kernel(builtin_kernel(c.kernel, c.m, mu, c.delta, c.epsilon), mu)


def resolve_goodness(c: ExperimentConfig, systems) -> GoodnessParams:
    gamma = default_gamma(c.m, c.epsilon) if c.gamma == "auto" else c.gamma
    if c.r == "auto":
        cubes = {Q for s in systems for Q in s.cubes()}
        r = default_r(cubes, gamma)
    else:
        r = c.r
    return GoodnessParams(r, gamma, c.seed)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NHSHIFT_THREADS", "1")))
    except ValueError:
        return 1


# -- experiments ---------------------------------------------------------------


@dataclass
class Outcome:
    summary: dict
    tables: dict  # name -> list of row dicts
    failures: list


def run_verify_haar(c, mu, ens, systems, rng) -> Outcome:
    with ThreadPoolExecutor(_threads()) as pool:
        seeds = rng.integers(0, 2**32, size=len(systems))
        rows = list(pool.map(lambda a: haar_residuals(a[0], np.random.default_rng(a[1])), zip(systems, seeds)))
    worst = {k: max(r[k] for r in rows) for k in rows[0]}
    tol = c.tolerances["haar"]
    failures = [f"haar {k} residual {v:.3g} > {tol:g}" for k, v in worst.items() if v > tol]
    table = [{"lattice": s.lattice.serialize(), **r} for s, r in zip(systems, rows)]
    return Outcome({"worst": worst, "lattices": len(systems)}, {"haar": table}, failures)


def run_goodness_scan(c, mu, ens, systems, rng) -> Outcome:
    gamma = default_gamma(c.m, c.epsilon) if c.gamma == "auto" else c.gamma
    cubes = sorted({Q for s in systems for Q in s.cubes()})
    mode = "exact" if (1 << c.d) ** c.N <= 1 << 16 else "montecarlo"
    rows = goodness_scan(cubes, range(1, c.N + 2), gamma, mode=mode)
    by_r = {}
    for row in rows:
        by_r[row["r"]] = max(by_r.get(row["r"], 0.0), row["p_bad"])
    vals = [by_r[r] for r in sorted(by_r)]
    monotone = all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    failures = [] if monotone else ["bad-cube probability is not monotone in r"]
    summary = {"gamma": gamma, "worst_p_bad_by_r": {str(k): v for k, v in sorted(by_r.items())},
               "monotone": monotone, "mode": mode}
    return Outcome(summary, {"goodness": rows}, failures)


def run_verify_averaging(c, mu, ens, systems, rng) -> Outcome:
    params = resolve_goodness(c, systems)
    eq = Equalizer(params)
    T = build_operator(c, mu, rng)
    w = mu.weights
    f = rng.standard_normal(mu.n_atoms)
    g = rng.standard_normal(mu.n_atoms)
    f -= np.sum(w * f) / w.sum()
    g -= np.sum(w * g) / w.sum()
    scale = T.norm() * np.sqrt(np.sum(w * f * f) * np.sum(w * g * g))
    tol = c.tolerances["averaging"]
    rows, failures = [], []
    for strict in ("ge", "gt", "all"):
        res = verify_half_identity(T, f, g, ens, eq, strict)
        rows.append(asdict(res))
        if res.abs_diff > tol * max(scale, 1e-300):
            failures.append(f"half identity ({strict}) off by {res.abs_diff:.3g}")
    probs = sorted({really_good_probability(Q, ens, eq) for s in systems for Q in s.haar_cubes()})
    summary = {"r": params.r, "gamma": params.gamma, "scale": scale, "identities": rows,
               "really_good_probability_range": [probs[0], probs[-1]] if probs else []}
    return Outcome(summary, {"averaging": rows}, failures)


def run_decompose(c, mu, ens, systems, rng) -> Outcome:
    params = resolve_goodness(c, systems)
    eq = Equalizer(params)
    T = build_operator(c, mu, rng)
    dp = DecompositionParams(params.r, c.epsilon, params.gamma)
    f = rng.standard_normal(mu.n_atoms)
    g = rng.standard_normal(mu.n_atoms)
    tol = c.tolerances["decompose"]

    def one(system):
        return ledger_residual(T, system, really_good_weights(system, eq), dp, f, g)

    with ThreadPoolExecutor(_threads()) as pool:
        residuals = list(pool.map(one, systems))
    first = assemble_decomposition(T, systems[0], really_good_weights(systems[0], eq), dp)
    report = first.report(f, g)
    worst = max(residuals)
    failures = [f"ledger reconstruction residual {worst:.3g} > {tol:g}"] if worst > tol else []
    envelopes = {}
    if c.kernel in ("riesz", "abs"):
        ie = inner_envelope(T, systems, c.epsilon, params.gamma)
        oe = outer_envelope(T, systems, params.gamma)
        envelopes = {
            "inner_t1_slope": log2_slope([r["gap"] for r in ie], [r["t1"] for r in ie]),
            "inner_t2_slope": log2_slope([r["gap"] for r in ie], [r["t2"] for r in ie]),
            "outer_slope": log2_slope([r["gap"] for r in oe], [r["element"] for r in oe]),
            "carleson": carleson_chain(T, systems, params.r),
        }
    summary = {"r": params.r, "gamma": params.gamma, "worst_residual": worst,
               "first_lattice_ledger": report, "envelopes": envelopes}
    tables = {"residuals": [{"lattice": s.lattice.serialize(), "residual": v} for s, v in zip(systems, residuals)],
              "pieces": report["pieces"]}
    return Outcome(summary, tables, failures)


def run_t1_bound(c, mu, ens, systems, rng) -> Outcome:
    params = resolve_goodness(c, systems)
    eq = Equalizer(params)
    T = build_operator(c, mu, rng)
    dp = DecompositionParams(params.r, c.epsilon, params.gamma)
    rep = t1_bound_report(T, ens, systems, lambda s: really_good_weights(s, eq), dp)
    failures = [] if rep["holds"] else ["compressed norm exceeds the decomposition bound"]
    return Outcome({"r": params.r, "gamma": params.gamma, **rep}, {"t1_bound": [rep]}, failures)


RUNNERS = {
    "verify-haar": run_verify_haar,
    "goodness-scan": run_goodness_scan,
    "verify-averaging": run_verify_averaging,
    "decompose": run_decompose,
    "t1-bound": run_t1_bound,
}


def _write_csv(path: Path, rows: list) -> None:
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0])
    with path.open("w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in row.items()})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def run_experiment(selector: str, c: ExperimentConfig, out_dir: Path) -> int:
    rng = np.random.default_rng(c.seed)
    mu = build_measure(c, rng)
    ens = build_ensemble(c)
    systems = haar_systems(mu, ens)
    selectors = [s for s in SELECTORS if s != "full-suite"] if selector == "full-suite" else [selector]
    status = 0
    for sel in selectors:
        sub_rng = np.random.default_rng([c.seed, SELECTORS.index(sel)])
        outcome = RUNNERS[sel](c, mu, ens, systems, sub_rng)
        target = out_dir / sel
        target.mkdir(parents=True, exist_ok=True)
        summary = {"schema": SCHEMA, "selector": sel, "config": _jsonable({k: v for k, v in asdict(c).items() if k != "out"}),
                   "passed": not outcome.failures, "failures": outcome.failures,
                   **_jsonable(outcome.summary)}
        (target / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        for name, rows in outcome.tables.items():
            _write_csv(target / f"{name}.csv", _jsonable(rows))
        for msg in outcome.failures:
            print(f"{sel}: FAILED {msg}", file=sys.stderr)
        print(f"{sel}: {'ok' if not outcome.failures else 'FAILED'}")
        status = max(status, 1 if outcome.failures else 0)
    return status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    ap = argparse.ArgumentParser(prog="nhshift", description=__doc__.splitlines()[0])
    ap.add_argument("selector", choices=SELECTORS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--version", action="version", version=__version__)
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        c = load_config(args.config)
        if args.seed is not None:
            c.seed = args.seed
        if args.out is not None:
            c.out = args.out
    except ConfigError as exc:
        print(f"nhshift: invalid config: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(c.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"schema": SCHEMA, "version": __version__, "argv": argv,
            "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(), "threads": _threads()}
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    try:
        return run_experiment(args.selector, c, out_dir)
    except (InvalidParameterError, ConfigurationError, ResourceLimitError) as exc:
        print(f"nhshift: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
