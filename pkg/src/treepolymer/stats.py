"""Monte Carlo ensembles over cascade environments and statistical reports.

Replicate seeds derive from a base seed through the package's splitmix64
mixing (``rng.replicate_seed``), so every report is a pure function of its
config: rerunning with the same config is bit-identical, and the replicate
set is independent of worker count or evaluation order.

Limits proved for the cascade (vanishing of the mass martingale under
strong disorder, the sqrt(k)-scaled ratio converging in probability at
criticality, the almost-sure CLT under weak disorder) come with no usable
finite-depth rates, so the reports assert trends across depths rather than
fixed tolerances: slopes of median log-mass trajectories, shrinking gaps
to the ratio constant, improving KS distances.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .cascade import BLOCK_DEPTH, WeightOracle, martingale_series
from .disorder import DisorderSpec, Regime, classify, seneta_heyde_constant
from .errors import ConfigError, RegimeError
from .laplace import asymptotic_variance
from .measure import sample_paths
from .rng import replicate_seed

QUANTILE_LEVELS = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything that determines an ensemble run."""

    spec: DisorderSpec
    depth: int
    replicates: int
    base_seed: int

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")

    def seed_for(self, index: int) -> int:
        return replicate_seed(self.base_seed, index)

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_json_dict(),
            "depth": self.depth,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
        }


def _quantiles(matrix: np.ndarray) -> np.ndarray:
    return np.quantile(matrix, QUANTILE_LEVELS, axis=0).T


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-depth quantiles and moments of Z, D, and the scaled ratio.

    Ratio statistics are taken over the replicates with D_k > 0 only;
    ``ratio_valid`` counts them and ``invalid`` counts the excluded ones.
    Rows where no replicate is valid hold NaN.
    """

    config: EnsembleConfig
    depths: np.ndarray
    z_quantiles: np.ndarray
    z_mean: np.ndarray
    z_stderr: np.ndarray
    d_quantiles: np.ndarray
    d_mean: np.ndarray
    d_stderr: np.ndarray
    ratio_quantiles: np.ndarray
    ratio_valid: np.ndarray
    invalid: np.ndarray
    median_log_z: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_json_dict(),
            "quantile_levels": list(QUANTILE_LEVELS),
            "depths": self.depths.tolist(),
            "z_quantiles": self.z_quantiles.tolist(),
            "z_mean": self.z_mean.tolist(),
            "z_stderr": self.z_stderr.tolist(),
            "d_quantiles": self.d_quantiles.tolist(),
            "d_mean": self.d_mean.tolist(),
            "d_stderr": self.d_stderr.tolist(),
            "ratio_quantiles": self.ratio_quantiles.tolist(),
            "ratio_valid": self.ratio_valid.tolist(),
            "invalid": self.invalid.tolist(),
            "median_log_z": self.median_log_z.tolist(),
        }

    def to_csv_text(self, config_comment: str = "") -> str:
        from ._version import __version__

        header = ["depth"]
        for stat in ("z", "d", "ratio"):
            header += [f"{stat}_q{int(q * 100)}" for q in QUANTILE_LEVELS]
        header += ["z_mean", "z_stderr", "d_mean", "d_stderr",
                   "ratio_valid", "invalid", "median_log_z"]
        lines = ["# schema_version=1", f"# tool=treepolymer {__version__}"]
        if config_comment:
            lines.append("# " + config_comment)
        lines.append(",".join(header))
        for i, k in enumerate(self.depths):
            row = [str(int(k))]
            row += [repr(float(x)) for x in self.z_quantiles[i]]
            row += [repr(float(x)) for x in self.d_quantiles[i]]
            row += [repr(float(x)) for x in self.ratio_quantiles[i]]
            row += [repr(float(self.z_mean[i])), repr(float(self.z_stderr[i])),
                    repr(float(self.d_mean[i])), repr(float(self.d_stderr[i])),
                    str(int(self.ratio_valid[i])), str(int(self.invalid[i])),
                    repr(float(self.median_log_z[i]))]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def run_ensemble(config: EnsembleConfig, *, jobs: int = 1,
                 block_depth: int = BLOCK_DEPTH,
                 max_depth: int | None = None) -> EnsembleSummary:
    """Run martingale series for every replicate and aggregate."""
    n = config.depth
    r_count = config.replicates

    def one(index: int):
        oracle = WeightOracle(config.spec, config.seed_for(index))
        return martingale_series(oracle, n, block_depth=block_depth,
                                 max_depth=max_depth)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            series = list(pool.map(one, range(r_count)))
    else:
        series = [one(i) for i in range(r_count)]

    log_z = np.stack([s.log_z for s in series])
    d = np.stack([s.d for s in series])
    ratio = np.stack([s.ratio for s in series])
    z = np.exp(log_z)

    valid = np.sum(~np.isnan(ratio), axis=0)
    ratio_q = np.full((n, len(QUANTILE_LEVELS)), np.nan)
    for i in range(n):
        col = ratio[:, i]
        col = col[~np.isnan(col)]
        if col.size:
            ratio_q[i] = np.quantile(col, QUANTILE_LEVELS)

    if r_count > 1:
        z_stderr = z.std(axis=0, ddof=1) / math.sqrt(r_count)
        d_stderr = d.std(axis=0, ddof=1) / math.sqrt(r_count)
    else:
        z_stderr = np.zeros(n)
        d_stderr = np.zeros(n)

    return EnsembleSummary(
        config=config,
        depths=np.arange(1, n + 1),
        z_quantiles=_quantiles(z),
        z_mean=z.mean(axis=0),
        z_stderr=z_stderr,
        d_quantiles=_quantiles(d),
        d_mean=d.mean(axis=0),
        d_stderr=d_stderr,
        ratio_quantiles=ratio_q,
        ratio_valid=valid,
        invalid=r_count - valid,
        median_log_z=np.median(log_z, axis=0),
    )


def median_log_z_slope(summary: EnsembleSummary) -> float:
    """Least-squares slope of the median log-mass trajectory against depth."""
    k = summary.depths.astype(np.float64)
    return float(np.polyfit(k, summary.median_log_z, 1)[0])


@dataclass(frozen=True)
class DichotomyReport:
    """Median log-mass trajectories of two ensembles and their trend slopes."""

    weak_config: EnsembleConfig
    strong_config: EnsembleConfig
    depths: np.ndarray
    median_log_z_weak: np.ndarray
    median_log_z_strong: np.ndarray
    slope_weak: float
    slope_strong: float

    @property
    def ordered(self) -> bool:
        return self.slope_weak > self.slope_strong

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "weak_config": self.weak_config.to_json_dict(),
            "strong_config": self.strong_config.to_json_dict(),
            "depths": self.depths.tolist(),
            "median_log_z_weak": self.median_log_z_weak.tolist(),
            "median_log_z_strong": self.median_log_z_strong.tolist(),
            "slope_weak": self.slope_weak,
            "slope_strong": self.slope_strong,
            "ordered": self.ordered,
        }


def dichotomy_report(summary_weak: EnsembleSummary,
                     summary_strong: EnsembleSummary) -> DichotomyReport:
    """Compare median log-mass trends of a weak and a strong ensemble."""
    if summary_weak.config.depth != summary_strong.config.depth:
        raise ConfigError("summaries must share the same depth")
    if summary_weak.config.replicates != summary_strong.config.replicates:
        raise ConfigError("summaries must share the same replicate count")
    return DichotomyReport(
        weak_config=summary_weak.config,
        strong_config=summary_strong.config,
        depths=summary_weak.depths,
        median_log_z_weak=summary_weak.median_log_z,
        median_log_z_strong=summary_strong.median_log_z,
        slope_weak=median_log_z_slope(summary_weak),
        slope_strong=median_log_z_slope(summary_strong),
    )


@dataclass(frozen=True)
class SenetaHeydeReport:
    """Distribution of sqrt(k) Z_k / D_k across replicates at criticality."""

    config: EnsembleConfig
    target: float
    depths: np.ndarray
    ratio_median: np.ndarray
    abs_gap: np.ndarray
    valid_fraction: np.ndarray
    summary: EnsembleSummary = field(repr=False)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_json_dict(),
            "target": self.target,
            "depths": self.depths.tolist(),
            "ratio_median": self.ratio_median.tolist(),
            "abs_gap": self.abs_gap.tolist(),
            "valid_fraction": self.valid_fraction.tolist(),
        }


def seneta_heyde_report(config: EnsembleConfig, *, jobs: int = 1,
                        block_depth: int = BLOCK_DEPTH,
                        max_depth: int | None = None) -> SenetaHeydeReport:
    """Ratio convergence diagnostics; only meaningful at the critical point."""
    if classify(config.spec) is not Regime.CRITICAL:
        raise RegimeError("seneta_heyde_report requires a critical disorder spec")
    target = seneta_heyde_constant(config.spec)
    summary = run_ensemble(config, jobs=jobs, block_depth=block_depth,
                           max_depth=max_depth)
    median = summary.ratio_quantiles[:, QUANTILE_LEVELS.index(0.5)]
    return SenetaHeydeReport(
        config=config,
        target=target,
        depths=summary.depths,
        ratio_median=median,
        abs_gap=np.abs(median - target),
        valid_fraction=summary.ratio_valid / config.replicates,
        summary=summary,
    )


def standard_normal_cdf(x):
    return ndtr(x)


def ks_statistic(samples, reference_cdf) -> float:
    """One-sample Kolmogorov-Smirnov sup-distance to a reference CDF."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    n = xs.size
    if n < 2:
        raise ValueError("ks_statistic needs at least 2 samples")
    cdf = np.asarray(reference_cdf(xs), dtype=np.float64)
    i = np.arange(1, n + 1, dtype=np.float64)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1.0) / n))
    return max(d_plus, d_minus)


@dataclass(frozen=True)
class CltReport:
    """Per-environment KS distances of the scaled endpoint to the normal law."""

    spec_json: dict
    depth: int
    environments: int
    paths_per_env: int
    base_seed: int
    path_seed: int
    ks_per_env: np.ndarray
    median_ks: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": {
                "spec": self.spec_json,
                "depth": self.depth,
                "environments": self.environments,
                "paths_per_env": self.paths_per_env,
                "base_seed": self.base_seed,
                "path_seed": self.path_seed,
            },
            "ks_per_env": self.ks_per_env.tolist(),
            "median_ks": self.median_ks,
        }


def clt_report(spec: DisorderSpec, depth: int, environments: int,
               paths_per_env: int, base_seed: int, path_seed: int = 0, *,
               jobs: int = 1, block_depth: int = BLOCK_DEPTH,
               max_depth: int | None = None) -> CltReport:
    """Sample endpoints under prob_n in weak disorder and test normality."""
    if classify(spec) is not Regime.WEAK:
        raise RegimeError("clt_report requires a weak disorder spec")
    if environments < 1 or paths_per_env < 2:
        raise ConfigError("need environments >= 1 and paths_per_env >= 2")
    scale = 1.0 / math.sqrt(depth)

    def one(index: int) -> float:
        oracle = WeightOracle(spec, replicate_seed(base_seed, index))
        rng = np.random.default_rng(replicate_seed(path_seed, index))
        steps = sample_paths(oracle, depth, paths_per_env, rng,
                             block_depth=block_depth, max_depth=max_depth)
        endpoints = steps.sum(axis=1, dtype=np.int64) * scale
        return ks_statistic(endpoints, standard_normal_cdf)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            ks = np.array(list(pool.map(one, range(environments))))
    else:
        ks = np.array([one(i) for i in range(environments)])
    return CltReport(
        spec_json=spec.to_json_dict(),
        depth=depth,
        environments=environments,
        paths_per_env=paths_per_env,
        base_seed=base_seed,
        path_seed=path_seed,
        ks_per_env=ks,
        median_ks=float(np.median(ks)),
    )


@dataclass(frozen=True)
class VarianceReport:
    """Sampled endpoint variance under diffusive scaling vs the target."""

    spec_json: dict
    depth: int
    environments: int
    paths_per_env: int
    base_seed: int
    path_seed: int
    target: float
    variance_per_env: np.ndarray
    median_variance: float
    gap: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": {
                "spec": self.spec_json,
                "depth": self.depth,
                "environments": self.environments,
                "paths_per_env": self.paths_per_env,
                "base_seed": self.base_seed,
                "path_seed": self.path_seed,
            },
            "target": self.target,
            "variance_per_env": self.variance_per_env.tolist(),
            "median_variance": self.median_variance,
            "gap": self.gap,
        }


def variance_report(spec: DisorderSpec, depth: int, environments: int,
                    paths_per_env: int, base_seed: int, path_seed: int = 0, *,
                    jobs: int = 1, block_depth: int = BLOCK_DEPTH,
                    max_depth: int | None = None) -> VarianceReport:
    """Estimate Var(endpoint)/n per environment; diagnostic, no pass/fail.

    Accepts lognormal specs at or above critical (the conjectured target
    (2 beta bc - bc^2)/beta^2) and the no-disorder control (target 1).
    """
    if spec.kind == "lognormal":
        regime = classify(spec)
        if regime is Regime.WEAK:
            raise RegimeError("variance_report targets strong disorder; "
                              "use the deterministic control for the weak side")
        target = asymptotic_variance(spec.beta)
    elif spec.kind == "deterministic":
        target = 1.0
    else:
        raise RegimeError("variance_report supports lognormal or deterministic specs")
    if environments < 1 or paths_per_env < 2:
        raise ConfigError("need environments >= 1 and paths_per_env >= 2")

    def one(index: int) -> float:
        oracle = WeightOracle(spec, replicate_seed(base_seed, index))
        rng = np.random.default_rng(replicate_seed(path_seed, index))
        steps = sample_paths(oracle, depth, paths_per_env, rng,
                             block_depth=block_depth, max_depth=max_depth)
        endpoints = steps.sum(axis=1, dtype=np.int64).astype(np.float64)
        return float(endpoints.var(ddof=1) / depth)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            var = np.array(list(pool.map(one, range(environments))))
    else:
        var = np.array([one(i) for i in range(environments)])
    median = float(np.median(var))
    return VarianceReport(
        spec_json=spec.to_json_dict(),
        depth=depth,
        environments=environments,
        paths_per_env=paths_per_env,
        base_seed=base_seed,
        path_seed=path_seed,
        target=target,
        variance_per_env=var,
        median_variance=median,
        gap=median - target,
    )
