"""Laplace rates of the polymer's exponential path functionals.

Under weak disorder the normalized log moment generating function of the
polygonal endpoint converges to the universal rate ln cosh(r), the same as
for the simple random walk.  For the lognormal family at or above the
critical parameter the rate in a neighborhood of the origin instead solves
an implicit system: with b = beta and bc the critical parameter,

    rate(r) = r tanh(r h(r)) + b^2 h(r) - b bc,

where h(r) > 0 is the unique root of

    g(h) = b^2 h^2 + 2 r h tanh(r h) - 2 ln cosh(r h) - bc^2 = 0.

g is strictly increasing on h > 0 (g'(h) = 2 b^2 h + 2 r^2 h sech^2(rh) > 0)
with g(0) = -bc^2 < 0, so the root is unique and bracketed; at r = 0 it is
bc / b exactly.  Differentiating the pair gives rate'(r) = tanh(r h(r))
identically, which the curve evaluator uses as a self-check, and hence

    rate(0) = 0,  rate'(0) = 0,  rate''(0) = h(0) = bc / b.

Separately, ``asymptotic_variance`` exposes the conjectured diffusive
variance (2 b bc - bc^2)/b^2 for b >= bc, extending the weak-disorder
value 1 continuously across bc.  Note that the two quantities agree only
at b = bc; the conjecture is a statement about endpoint fluctuations, and
this module reports both without reconciling them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .cascade import BLOCK_DEPTH, Vertex, WeightOracle, subtree_level_sums
from .disorder import critical_beta
from .errors import ConfigError, SolverError

RESIDUAL_TOL = 1e-12


def _log_cosh(x: float) -> float:
    # |x| + log1p(e^{-2|x|}) - ln 2 never overflows
    ax = abs(x)
    return ax + math.log1p(math.exp(-2.0 * ax)) - math.log(2.0)


def weak_disorder_rate(r: float) -> float:
    """ln cosh r, the universal weak-disorder rate."""
    return _log_cosh(r)


def _implicit_g(h: float, beta: float, r: float, bc2: float) -> float:
    rh = r * h
    return beta * beta * h * h + 2.0 * rh * math.tanh(rh) - 2.0 * _log_cosh(rh) - bc2


def solve_h(beta: float, r: float, *, residual_tol: float = RESIDUAL_TOL,
            bracket_hint: float | None = None) -> float:
    """The positive root h(r) of the implicit strong-disorder equation.

    Requires beta >= critical; the equation is derived only there.  The
    root is unique because g is strictly increasing for h > 0 (see module
    docstring), so bracketed root finding cannot pick a wrong branch.
    """
    bc = critical_beta()
    if not math.isfinite(beta) or beta < bc - 1e-12:
        raise ConfigError(f"solve_h requires beta >= critical ({bc:.10f}); got {beta!r}")
    if not math.isfinite(r):
        raise ConfigError("r must be finite")
    if r == 0.0:
        return bc / beta
    bc2 = bc * bc
    g = lambda h: _implicit_g(h, beta, r, bc2)
    hi = max(2.0 * bc / beta, 1.0)
    if bracket_hint is not None and bracket_hint > 0.0:
        hinted = 2.0 * bracket_hint
        if g(hinted) > 0.0:
            hi = hinted
    expansions = 0
    while g(hi) <= 0.0:
        hi *= 2.0
        expansions += 1
        if expansions > 60:
            raise SolverError("no sign change found while expanding the bracket")
    root = brentq(g, 0.0, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
    residual = g(root)
    if abs(residual) > residual_tol:
        raise SolverError(
            f"root residual {residual:.3e} exceeds tolerance {residual_tol:.1e}"
        )
    return float(root)


def laplace_rate(beta: float, r: float) -> float:
    """The strong-disorder rate at r for the lognormal family."""
    h = solve_h(beta, r)
    bc = critical_beta()
    return r * math.tanh(r * h) + beta * beta * h - beta * bc


def asymptotic_variance(beta: float) -> float:
    """Conjectured diffusive variance of the endpoint: 1 below critical,
    (2 beta bc - bc^2)/beta^2 at and above; continuous at the critical point."""
    if not beta > 0.0:
        raise ConfigError("beta must be positive")
    bc = critical_beta()
    if beta < bc:
        return 1.0
    return (2.0 * beta * bc - bc * bc) / (beta * beta)


@dataclass(frozen=True)
class LaplaceCurve:
    """(r, h, rate) on a grid for one beta.

    ``failed`` lists grid indices where the solver failed (entries NaN);
    ``suspect`` lists interior indices where the identity
    rate'(r) = tanh(r h) disagreed with a finite-difference derivative
    beyond the grid-resolution tolerance, flagged rather than hidden.
    """

    beta: float
    r: np.ndarray
    h: np.ndarray
    rate: np.ndarray
    failed: tuple[int, ...] = ()
    suspect: tuple[int, ...] = ()

    def to_csv_text(self, config_comment: str = "") -> str:
        from ._version import __version__

        lines = ["# schema_version=1", f"# tool=treepolymer {__version__}"]
        if config_comment:
            lines.append("# " + config_comment)
        lines.append("r,h,rate")
        for i in range(self.r.size):
            lines.append("%s,%s,%s" % (repr(float(self.r[i])), repr(float(self.h[i])),
                                       repr(float(self.rate[i]))))
        return "\n".join(lines) + "\n"


def laplace_curve(beta: float, r_min: float, r_max: float, steps: int) -> LaplaceCurve:
    """Evaluate h and the rate on a uniform grid, warm-starting each bracket."""
    if steps < 2:
        raise ConfigError("steps must be >= 2")
    if not r_min < r_max:
        raise ConfigError("need r_min < r_max")
    grid = np.linspace(r_min, r_max, steps)
    h = np.full(steps, np.nan)
    rate = np.full(steps, np.nan)
    failed = []
    bc = critical_beta()
    prev = None
    for i, r in enumerate(grid):
        try:
            hi = solve_h(beta, float(r), bracket_hint=prev)
        except SolverError:
            failed.append(i)
            prev = None
            continue
        prev = hi
        h[i] = hi
        rate[i] = r * math.tanh(r * hi) + beta * beta * hi - beta * bc
    # self-check: rate' = tanh(r h) must match centered differences
    suspect = []
    dr = float(grid[1] - grid[0])
    qc_tol = 10.0 * dr * dr + 1e-8
    for i in range(1, steps - 1):
        if np.isnan(rate[i - 1]) or np.isnan(rate[i]) or np.isnan(rate[i + 1]):
            continue
        fd = (rate[i + 1] - rate[i - 1]) / (2.0 * dr)
        if abs(fd - math.tanh(grid[i] * h[i])) > qc_tol:
            suspect.append(i)
    return LaplaceCurve(beta=beta, r=grid, h=h, rate=rate,
                        failed=tuple(failed), suspect=tuple(suspect))


def empirical_laplace_rate(oracle: WeightOracle, n: int, r: float, *,
                           block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                           max_depth: int | None = None) -> float:
    """(1/n) ln E_{prob_n} exp(r * endpoint), exactly, by a tilted sweep.

    One traversal augments the partition sweep with the per-step tilt
    exp(r * step); the ratio of the tilted and plain sums is the exact
    finite-volume expectation.  For the no-disorder control this equals
    ln cosh r for every n (binomial identity).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sums = subtree_level_sums(oracle, Vertex.root(), n, tilt=r, levels="last",
                              block_depth=block_depth, jobs=jobs, max_depth=max_depth)
    return float((sums.log_z_tilted[n] - sums.log_z[n]) / n)
