"""Command-line interface.

One binary, subcommand style; every run is a pure function of its flags,
and output files embed the full scientific config (spec, seeds, depths,
replicate counts) so they are reproducible byte-for-byte.  Worker count
(--jobs) is an execution detail: it is excluded from embedded configs and
never changes output bytes.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 regime mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ._version import __version__
from . import laplace as laplace_mod
from . import measure as measure_mod
from . import stats as stats_mod
from . import svgplot
from .cascade import WeightOracle
from .disorder import (LN2, DisorderSpec, classify, critical_beta,
                       disorder_parameter, seneta_heyde_constant,
                       sigma_squared)
from .errors import (ConfigError, DegenerateDisorderError, DepthCapError,
                     NonpositiveNormalizerError, RegimeError, SolverError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_REGIME = 4


def _add_spec_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--dist", choices=["lognormal", "twopoint", "deterministic"],
                        help="weight distribution family")
    parser.add_argument("--beta", type=float, help="lognormal parameter")
    parser.add_argument("--a", type=float, help="two-point lower support point")
    parser.add_argument("--p", type=float, help="two-point lower-point probability")
    parser.add_argument("--spec-json", type=str,
                        help='spec as JSON, e.g. \'{"kind":"lognormal","beta":1.2}\'')
    parser.add_argument("--config", type=str,
                        help="JSON config file; explicit flags override its entries")


def _add_common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker threads (default: available parallelism); "
                             "never affects output bytes")
    parser.add_argument("--out", type=str, help="output path or prefix")
    parser.add_argument("--format", choices=["csv", "json", "svg"], default="csv",
                        help="primary output format (svg applies to laplace only)")


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    return obj


def _resolve(args, key: str, file_cfg: dict, default=None):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in file_cfg:
        return file_cfg[key]
    return default


def build_spec(args, file_cfg: dict) -> DisorderSpec:
    spec_json = _resolve(args, "spec-json", file_cfg)
    if spec_json is not None:
        if isinstance(spec_json, str):
            try:
                spec_json = json.loads(spec_json)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--spec-json is not valid JSON: {exc}") from exc
        return DisorderSpec.from_json_dict(spec_json)
    dist = _resolve(args, "dist", file_cfg)
    if dist is None:
        raise ConfigError("no distribution given: use --dist or --spec-json or --config")
    if dist == "lognormal":
        beta = _resolve(args, "beta", file_cfg)
        if beta is None:
            raise ConfigError("--dist lognormal needs --beta")
        return DisorderSpec(kind="lognormal", beta=float(beta))
    if dist == "twopoint":
        a = _resolve(args, "a", file_cfg)
        p = _resolve(args, "p", file_cfg)
        if a is None or p is None:
            raise ConfigError("--dist twopoint needs --a and --p")
        return DisorderSpec(kind="twopoint", a=float(a), p=float(p))
    return DisorderSpec(kind="deterministic")


def _jobs(args) -> int:
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.jobs
    return os.cpu_count() or 1


def _config_comment(pairs: dict) -> str:
    parts = []
    for key in sorted(pairs):
        val = pairs[key]
        if isinstance(val, dict):
            val = json.dumps(val, sort_keys=True, separators=(",", ":"))
        parts.append(f"{key}={val}")
    return " ".join(parts)


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: str, obj: dict):
    if "tool" not in obj:
        obj = {"tool": f"treepolymer {__version__}", **obj}
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _require_out(args) -> str:
    if not args.out:
        raise ConfigError("this subcommand needs --out")
    return args.out


# ---------------------------------------------------------------- classify

def cmd_classify(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_cfg)
    param = disorder_parameter(spec)
    s2 = sigma_squared(spec)
    regime = classify(spec)
    print(f"spec            {json.dumps(spec.to_json_dict(), sort_keys=True)}")
    print(f"E[X ln X]       {param!r}")
    print(f"ln 2            {LN2!r}")
    print(f"sigma^2         {s2!r}")
    print(f"critical beta   {critical_beta()!r}")
    print(f"regime          {regime.value}")
    if s2 > 0.0:
        print(f"ratio constant  {seneta_heyde_constant(spec)!r}")
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_cfg)
    depth = int(_resolve(args, "depth", file_cfg, 12))
    replicates = int(_resolve(args, "replicates", file_cfg, 100))
    seed = int(_resolve(args, "seed", file_cfg, 1))
    out = _require_out(args)
    if args.format == "svg":
        raise ConfigError("simulate writes csv or json, not svg")
    config = stats_mod.EnsembleConfig(spec=spec, depth=depth,
                                      replicates=replicates, base_seed=seed)
    summary = stats_mod.run_ensemble(config, jobs=_jobs(args))
    if args.format == "json":
        _write_json(out, summary.to_json_dict())
    else:
        _write_text(out, summary.to_csv_text(_config_comment(config.to_json_dict())))
    return EXIT_OK


# ---------------------------------------------------------------- measure

def cmd_measure(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_cfg)
    depth = int(_resolve(args, "depth", file_cfg, 12))
    m = int(_resolve(args, "rectangle-depth", file_cfg, 4))
    big_n = int(_resolve(args, "big-n", file_cfg, 12))
    seed = int(_resolve(args, "seed", file_cfg, 1))
    char_arg = _resolve(args, "character", file_cfg)
    out = _require_out(args)
    jobs = _jobs(args)
    oracle = WeightOracle(spec, seed)

    finite = measure_mod.finite_volume_measure(oracle, depth, m, jobs=jobs)
    _write_text(out + ".prob_n.csv", finite.to_csv_text())
    infinite = measure_mod.infinite_volume_measure(oracle, m, big_n, jobs=jobs)
    _write_text(out + ".prob_inf.csv", infinite.to_csv_text())

    if char_arg:
        try:
            levels = [int(tok) for tok in str(char_arg).split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"--character must be comma-separated integers: {exc}")
        f = measure_mod.Character(levels)
        payload = {
            "schema_version": 1,
            "tool": f"treepolymer {__version__}",
            "config": {
                "spec": spec.to_json_dict(), "seed": seed, "depth": depth,
                "big_n": big_n, "character": sorted(f.levels),
            },
            "finite_volume": measure_mod.character_expectation_n(oracle, depth, f, jobs=jobs),
            "infinite_volume": measure_mod.character_expectation_inf(oracle, f, big_n, jobs=jobs),
        }
        payload["gap"] = abs(payload["finite_volume"] - payload["infinite_volume"])
        _write_json(out + ".characters.json", payload)
    return EXIT_OK


# ---------------------------------------------------------------- laplace

def cmd_laplace(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    beta = _resolve(args, "beta", file_cfg)
    if beta is None:
        raise ConfigError("laplace needs --beta")
    beta = float(beta)
    r_min = float(_resolve(args, "r-min", file_cfg, -2.0))
    r_max = float(_resolve(args, "r-max", file_cfg, 2.0))
    steps = int(_resolve(args, "steps", file_cfg, 201))
    out = _require_out(args)
    curve = laplace_mod.laplace_curve(beta, r_min, r_max, steps)
    comment = f"tool=treepolymer {__version__} " + _config_comment(
        {"beta": beta, "r_min": r_min, "r_max": r_max, "steps": steps})
    _write_text(out + ".csv", curve.to_csv_text(comment))

    series = [("strong beta=%.6g" % beta, curve.r, curve.rate)]
    if args.overlay_weak:
        weak = np.array([laplace_mod.weak_disorder_rate(float(r)) for r in curve.r])
        series.append(("weak ln cosh r", curve.r, weak))
    svg = svgplot.line_chart(series, "Laplace rate of the endpoint tilt",
                             "r", "rate", comment=comment)
    _write_text(out + ".svg", svg)
    if len(curve.failed) * 100 > steps:
        print(f"laplace: {len(curve.failed)} of {steps} grid points failed",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- reports

def cmd_clt(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_cfg)
    depth = int(_resolve(args, "depth", file_cfg, 22))
    environments = int(_resolve(args, "environments", file_cfg, 20))
    paths = int(_resolve(args, "paths", file_cfg, 100000))
    seed = int(_resolve(args, "seed", file_cfg, 1))
    path_seed = int(_resolve(args, "path-seed", file_cfg, 0))
    out = _require_out(args)
    report = stats_mod.clt_report(spec, depth, environments, paths, seed,
                                  path_seed, jobs=_jobs(args))
    _write_json(out, report.to_json_dict())
    return EXIT_OK


def cmd_variance(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_cfg)
    depth = int(_resolve(args, "depth", file_cfg, 20))
    environments = int(_resolve(args, "environments", file_cfg, 20))
    paths = int(_resolve(args, "paths", file_cfg, 20000))
    seed = int(_resolve(args, "seed", file_cfg, 1))
    path_seed = int(_resolve(args, "path-seed", file_cfg, 0))
    out = _require_out(args)
    report = stats_mod.variance_report(spec, depth, environments, paths, seed,
                                       path_seed, jobs=_jobs(args))
    _write_json(out, report.to_json_dict())
    return EXIT_OK


def cmd_ratio(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    if (_resolve(args, "dist", file_cfg) is None
            and _resolve(args, "spec-json", file_cfg) is None):
        args.dist = "lognormal"
        if args.beta is None:
            args.beta = critical_beta()
    spec = build_spec(args, file_cfg)
    depth = int(_resolve(args, "depth", file_cfg, 20))
    replicates = int(_resolve(args, "replicates", file_cfg, 200))
    seed = int(_resolve(args, "seed", file_cfg, 1))
    out = _require_out(args)
    config = stats_mod.EnsembleConfig(spec=spec, depth=depth,
                                      replicates=replicates, base_seed=seed)
    report = stats_mod.seneta_heyde_report(config, jobs=_jobs(args))
    _write_json(out, report.to_json_dict())
    return EXIT_OK


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treepolymer",
        description="Tree polymers on the binary tree: martingales, measures, "
                    "Laplace rates.",
    )
    parser.add_argument("--version", action="version",
                        version=f"treepolymer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="print disorder parameters and regime")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="martingale ensemble quantile tables")
    _add_spec_flags(p)
    _add_common_flags(p)
    p.add_argument("--depth", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("measure", help="rectangle probabilities and characters")
    _add_spec_flags(p)
    _add_common_flags(p)
    p.add_argument("--depth", type=int, help="finite-volume depth n")
    p.add_argument("--rectangle-depth", type=int, help="rectangle depth m")
    p.add_argument("--big-n", type=int, help="depth N of the infinite-volume estimate")
    p.add_argument("--seed", type=int)
    p.add_argument("--character", type=str, help="comma-separated level set F")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("laplace", help="strong-disorder rate curve and figure")
    _add_spec_flags(p)
    _add_common_flags(p)
    p.add_argument("--r-min", type=float)
    p.add_argument("--r-max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--overlay-weak", action="store_true",
                   help="overlay the weak-disorder rate ln cosh r")
    p.set_defaults(func=cmd_laplace)

    p = sub.add_parser("clt", help="weak-disorder endpoint normality report")
    _add_spec_flags(p)
    _add_common_flags(p)
    p.add_argument("--depth", type=int)
    p.add_argument("--environments", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--path-seed", type=int)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("variance", help="diffusive-scaling variance diagnostic")
    _add_spec_flags(p)
    _add_common_flags(p)
    p.add_argument("--depth", type=int)
    p.add_argument("--environments", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--path-seed", type=int)
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("ratio", help="Seneta-Heyde ratio report at criticality")
    _add_spec_flags(p)
    _add_common_flags(p)
    p.add_argument("--depth", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ratio)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DepthCapError, SolverError, NonpositiveNormalizerError,
            DegenerateDisorderError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RegimeError as exc:
        print(f"regime mismatch: {exc}", file=sys.stderr)
        return EXIT_REGIME


if __name__ == "__main__":
    sys.exit(main())
