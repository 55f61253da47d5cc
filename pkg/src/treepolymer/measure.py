"""Polymer measures on the tree boundary, restricted to rectangles.

A depth-m rectangle is the set of boundary paths whose first m steps equal
a given vertex v.  Restricted to depth m, the finite-volume polymer measure
has the closed form

    prob_n(rect(v)) = Z_n^{-1} (prod_{j<=m} X_{v|j} 2^{-m}) Z_{n-m}(v),   m <= n
    prob_n(rect(v)) = Z_n^{-1} prod_{j<=n} X_{v|j} 2^{-m},                m > n,

and the infinite-volume measure at critical strong disorder is defined on
rectangles through the derivative-martingale limits:

    prob_inf(rect(v)) = D(v) prod_{j<=m} X_{v|j} / sum_{|u|=m} D(u) prod_{j<=m} X_{u|j},

which we estimate by plugging in the depth-N approximant D_N.  N is always
explicit in the API and the normalizer is reported alongside the result:
at small N the D_N(u) can be negative, and a nonpositive normalizer is an
error (the estimate is meaningless for that environment/depth), while
negative individual entries are kept unclipped to avoid biasing the
estimator.

All vertex arrays are indexed in canonical order (+1 child before -1
child), and every product is carried in log space; rectangle probabilities
are invariant under a common rescaling of all prefix weights, exactly, by
construction (the normalizer is computed from the same shifted array).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .cascade import (BLOCK_DEPTH, DEPTH_CAP, LN2, Vertex, WeightOracle,
                      _children, _level_sums_by_id, subtree_level_sums)
from .errors import ConfigError, DepthCapError, NonpositiveNormalizerError

# Rectangle depth is bounded by the size of the dense 2^m vertex array.
RECT_CAP = 16
CHARACTER_CAP = 12


def _level_log_weights(oracle: WeightOracle, root: Vertex, depth: int):
    """ids and accumulated log-weights of every vertex at ``depth`` below root."""
    ids = np.array([root.node_id], dtype=np.uint64)
    logw = np.array([0.0])
    for _ in range(depth):
        ids = _children(ids)
        lw = oracle.log_weight_ids(ids)
        logw = np.repeat(logw, 2)
        logw += lw
    return ids, logw


@dataclass(frozen=True)
class RestrictedMeasure:
    """A probability vector over the 2^m depth-m rectangles.

    ``provenance_kind`` is "prob_n" (finite volume at depth n) or
    "prob_inf" (infinite-volume estimate via D_N); ``provenance_depth``
    carries the corresponding n or N.  Infinite-volume entries can be
    negative in environments where some D_N(u) < 0; finite-volume entries
    are nonnegative always.
    """

    depth: int
    probabilities: np.ndarray
    provenance_kind: str
    provenance_depth: int
    seed: int
    spec_json: dict = field(repr=False)
    normalizer_shifted: float | None = None
    normalizer_log_shift: float | None = None

    def probability_of(self, v: Vertex) -> float:
        if v.depth != self.depth:
            raise ValueError("vertex depth does not match measure depth")
        return float(self.probabilities[v.rank])

    def refined_to(self, coarser_depth: int) -> np.ndarray:
        """Sum sibling pairs down to a coarser rectangle depth."""
        if not 0 <= coarser_depth <= self.depth:
            raise ValueError("coarser_depth out of range")
        p = self.probabilities
        for _ in range(self.depth - coarser_depth):
            p = p[0::2] + p[1::2]
        return p

    def to_csv_text(self) -> str:
        lines = [
            "# schema_version=1",
            f"# tool=treepolymer {__version__}",
            "# provenance=%s depth_param=%d rectangle_depth=%d seed=%d spec=%s"
            % (self.provenance_kind, self.provenance_depth, self.depth, self.seed,
               json.dumps(self.spec_json, sort_keys=True, separators=(",", ":"))),
        ]
        if self.normalizer_shifted is not None:
            lines.append("# normalizer_shifted=%s normalizer_log_shift=%s"
                         % (repr(self.normalizer_shifted), repr(self.normalizer_log_shift)))
        lines.append("vertex,probability")
        for r in range(self.probabilities.size):
            lines.append("%s,%s" % (Vertex.from_rank(self.depth, r),
                                    repr(float(self.probabilities[r]))))
        return "\n".join(lines) + "\n"


def _check_rect_depth(m: int):
    if m < 1:
        raise ValueError("rectangle depth must be >= 1")
    if m > RECT_CAP:
        raise DepthCapError(f"rectangle depth {m} exceeds cap {RECT_CAP}")


def _map_ordered(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def finite_volume_measure(oracle: WeightOracle, n: int, m: int, *,
                          block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                          max_depth: int | None = None) -> RestrictedMeasure:
    """prob_n restricted to depth-m rectangles, for all 2^m vertices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_rect_depth(m)
    cap = DEPTH_CAP if max_depth is None else max_depth
    if max(n, m) > cap:
        raise DepthCapError(f"depth {max(n, m)} exceeds cap {cap}")

    if m <= n:
        _, logw = _level_log_weights(oracle, Vertex.root(), m)

        def sub_log_z(rank: int) -> float:
            v = Vertex.from_rank(m, rank)
            sums = subtree_level_sums(oracle, v, n - m, levels="last",
                                      block_depth=block_depth, max_depth=max_depth)
            return float(sums.log_z[n - m])

        log_z_sub = np.array(_map_ordered(sub_log_z, range(1 << m), jobs))
        scores = logw + log_z_sub
    else:
        _, logw_n = _level_log_weights(oracle, Vertex.root(), n)
        scores = np.repeat(logw_n, 1 << (m - n))
    shift = scores.max()
    t = np.exp(scores - shift)
    probs = t / t.sum()
    return RestrictedMeasure(
        depth=m, probabilities=probs, provenance_kind="prob_n",
        provenance_depth=n, seed=oracle.seed, spec_json=oracle.spec.to_json_dict(),
    )


def prob_n_rectangle(oracle: WeightOracle, n: int, v: Vertex, *,
                     block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                     max_depth: int | None = None) -> float:
    """prob_n of the rectangle at ``v``, via the closed form in log space."""
    m = v.depth
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and a non-root vertex")
    cap = DEPTH_CAP if max_depth is None else max_depth
    if max(n, m) > cap:
        raise DepthCapError(f"depth {max(n, m)} exceeds cap {cap}")
    log_z_n = subtree_level_sums(oracle, Vertex.root(), n, levels="last",
                                 block_depth=block_depth, jobs=jobs,
                                 max_depth=max_depth).log_z[n]
    if m <= n:
        sub = subtree_level_sums(oracle, v, n - m, levels="last",
                                 block_depth=block_depth, jobs=jobs,
                                 max_depth=max_depth).log_z[n - m]
        log_p = oracle.path_log_weight(v) - m * LN2 + sub - log_z_n
    else:
        log_p = oracle.path_log_weight(v.prefix(n)) - m * LN2 - log_z_n
    return math.exp(log_p)


def _self_normalized(d: np.ndarray, logw: np.ndarray):
    """d_v e^{logw_v} / sum_u d_u e^{logw_u}, max-shifted.

    Adding a constant to every logw entry changes nothing, bitwise: only
    logw - max(logw) enters.  Returns (None, shifted_sum, shift) when the
    normalizer is nonpositive or non-finite.
    """
    shift = float(logw.max())
    raw = d * np.exp(logw - shift)
    den = float(raw.sum())
    if not den > 0.0 or not math.isfinite(den):
        return None, den, shift
    return raw / den, den, shift


def infinite_volume_measure(oracle: WeightOracle, m: int, big_n: int, *,
                            block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                            max_depth: int | None = None) -> RestrictedMeasure:
    """Infinite-volume estimate on depth-m rectangles using D_{big_n}.

    Raises NonpositiveNormalizerError when sum_u D_N(u) w(u) <= 0, which
    signals that big_n is too small for this environment.
    """
    _check_rect_depth(m)
    if big_n < 1:
        raise ValueError("big_n must be >= 1")
    cap = DEPTH_CAP if max_depth is None else max_depth
    if m + big_n > cap:
        raise DepthCapError(f"depth {m + big_n} exceeds cap {cap}")

    _, logw = _level_log_weights(oracle, Vertex.root(), m)

    def sub_d(rank: int) -> float:
        v = Vertex.from_rank(m, rank)
        sums = subtree_level_sums(oracle, v, big_n, levels="last",
                                  block_depth=block_depth, max_depth=max_depth)
        return float(sums.d[big_n])

    d = np.array(_map_ordered(sub_d, range(1 << m), jobs))
    probs, den, shift = _self_normalized(d, logw)
    if probs is None:
        raise NonpositiveNormalizerError(
            "infinite-volume normalizer is nonpositive at depth "
            f"N={big_n} (shifted value {den!r}); increase N for this environment",
            normalizer=den,
        )
    return RestrictedMeasure(
        depth=m, probabilities=probs, provenance_kind="prob_inf",
        provenance_depth=big_n, seed=oracle.seed, spec_json=oracle.spec.to_json_dict(),
        normalizer_shifted=den, normalizer_log_shift=float(shift - m * LN2),
    )


def prob_inf_rectangle(oracle: WeightOracle, v: Vertex, big_n: int, *,
                       block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                       max_depth: int | None = None) -> float:
    """Infinite-volume estimate of one rectangle (computes the whole level)."""
    meas = infinite_volume_measure(oracle, v.depth, big_n, block_depth=block_depth,
                                   jobs=jobs, max_depth=max_depth)
    return meas.probability_of(v)


@dataclass(frozen=True)
class Character:
    """A finite set of level indices; the Fourier basis of the boundary group.

    chi_F(s) = prod_{j in F} s_j.  The empty set is the trivial character.
    """

    levels: frozenset[int]

    def __init__(self, levels=()):
        levels = frozenset(int(j) for j in levels)
        if any(j < 1 for j in levels):
            raise ConfigError("character level indices must be >= 1")
        if levels and max(levels) > CHARACTER_CAP:
            raise ConfigError(
                f"character levels are capped at {CHARACTER_CAP} "
                "(expectations sum over 2^max(F) vertices)"
            )
        object.__setattr__(self, "levels", levels)

    @property
    def max_level(self) -> int:
        return max(self.levels) if self.levels else 0

    def values_at_depth(self, m: int) -> np.ndarray:
        """chi_F over all depth-m vertices in canonical order."""
        if m < self.max_level:
            raise ValueError("depth must be >= max character level")
        ranks = np.arange(1 << m, dtype=np.int64)
        chi = np.ones(1 << m, dtype=np.float64)
        for j in sorted(self.levels):
            bit = (ranks >> (m - j)) & 1
            chi *= 1.0 - 2.0 * bit
        return chi


def character_expectation_n(oracle: WeightOracle, n: int, f: Character, *,
                            block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                            max_depth: int | None = None) -> float:
    """Exact E_{prob_n} chi_F as a sum over the 2^max(F) rectangle masses."""
    if not f.levels:
        return 1.0
    m = f.max_level
    if n <= m:
        raise ConfigError(f"character expectation needs n > max(F) = {m}")
    meas = finite_volume_measure(oracle, n, m, block_depth=block_depth,
                                 jobs=jobs, max_depth=max_depth)
    return float(np.dot(f.values_at_depth(m), meas.probabilities))


def character_expectation_inf(oracle: WeightOracle, f: Character, big_n: int, *,
                              block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                              max_depth: int | None = None) -> float:
    """E_{prob_inf} chi_F under the depth-N infinite-volume estimate."""
    if not f.levels:
        return 1.0
    m = f.max_level
    meas = infinite_volume_measure(oracle, m, big_n, block_depth=block_depth,
                                   jobs=jobs, max_depth=max_depth)
    return float(np.dot(f.values_at_depth(m), meas.probabilities))


@dataclass(frozen=True)
class PathSample:
    """One polymer path of length n: steps and the polygonal positions."""

    steps: tuple[int, ...]

    @property
    def positions(self) -> tuple[int, ...]:
        pos = [0]
        for s in self.steps:
            pos.append(pos[-1] + s)
        return tuple(pos)


def _subtree_leaf_lse(oracle, root_id, depth, block_depth) -> float:
    """log sum over depth-``depth`` leaf paths of e^{log-weight along path}."""
    sums = _level_sums_by_id(oracle, root_id, root_id.bit_length() - 1, depth,
                             levels="last", block_depth=block_depth)
    return float(sums.log_z[depth] + depth * LN2)


def _route_dense(oracle, root_id, depth, rows, out, col0, rng):
    """Sample ``depth`` steps for the given paths with the full subtree in memory."""
    ids = np.array([root_id], dtype=np.uint64)
    logw_levels = [np.array([0.0])]
    for _ in range(depth):
        ids = _children(ids)
        lw = oracle.log_weight_ids(ids)
        prev = np.repeat(logw_levels[-1], 2)
        prev += lw
        logw_levels.append(prev)
    # backward leaf-sum pass: S[j][i] = log of the summed leaf weights below i
    s_levels = [None] * (depth + 1)
    s_levels[depth] = logw_levels[depth]
    for j in range(depth - 1, -1, -1):
        nxt = s_levels[j + 1]
        s_levels[j] = np.logaddexp(nxt[0::2], nxt[1::2])
    idx = np.zeros(rows.size, dtype=np.int64)
    for j in range(depth):
        p_plus = np.exp(s_levels[j + 1][2 * idx] - s_levels[j][idx])
        go_minus = rng.random(rows.size) >= p_plus
        out[rows, col0 + j] = np.where(go_minus, -1, 1)
        idx = 2 * idx + go_minus
    return idx


def _sample_recursive(oracle, root_id, depth, rows, out, col0, rng, block_depth):
    if depth <= block_depth:
        _route_dense(oracle, root_id, depth, rows, out, col0, rng)
        return
    split = min(depth - block_depth, block_depth)
    ids = np.array([root_id], dtype=np.uint64)
    logw_levels = [np.array([0.0])]
    for _ in range(split):
        ids = _children(ids)
        lw = oracle.log_weight_ids(ids)
        prev = np.repeat(logw_levels[-1], 2)
        prev += lw
        logw_levels.append(prev)
    tail = np.array([
        _subtree_leaf_lse(oracle, int(ids[i]), depth - split, block_depth)
        for i in range(ids.size)
    ])
    s_levels = [None] * (split + 1)
    s_levels[split] = logw_levels[split] + tail
    for j in range(split - 1, -1, -1):
        nxt = s_levels[j + 1]
        s_levels[j] = np.logaddexp(nxt[0::2], nxt[1::2])
    idx = np.zeros(rows.size, dtype=np.int64)
    for j in range(split):
        p_plus = np.exp(s_levels[j + 1][2 * idx] - s_levels[j][idx])
        go_minus = rng.random(rows.size) >= p_plus
        out[rows, col0 + j] = np.where(go_minus, -1, 1)
        idx = 2 * idx + go_minus
    # recurse into occupied subtrees in canonical (ascending index) order
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    boundaries = np.nonzero(np.diff(sorted_idx))[0] + 1
    for chunk in np.split(order, boundaries):
        node = int(idx[chunk[0]])
        _sample_recursive(oracle, int(ids[node]), depth - split, rows[chunk],
                          out, col0 + split, rng, block_depth)


def sample_paths(oracle: WeightOracle, n: int, count: int, rng: np.random.Generator, *,
                 block_depth: int = BLOCK_DEPTH, max_depth: int | None = None) -> np.ndarray:
    """Draw ``count`` paths exactly from prob_n; rows are +/-1 step vectors.

    Sequential conditioning: from vertex v the walk steps to child c with
    probability proportional to the summed leaf weights of the subtree
    below c.  The sampling stream ``rng`` is caller-owned and independent
    of the environment seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    cap = DEPTH_CAP if max_depth is None else max_depth
    if n > cap:
        raise DepthCapError(f"depth {n} exceeds cap {cap}")
    out = np.empty((count, n), dtype=np.int8)
    rows = np.arange(count, dtype=np.int64)
    _sample_recursive(oracle, Vertex.root().node_id, n, rows, out, 0, rng, block_depth)
    return out


def sample_path(oracle: WeightOracle, n: int, rng: np.random.Generator, *,
                block_depth: int = BLOCK_DEPTH, max_depth: int | None = None) -> PathSample:
    """Draw one path exactly from prob_n."""
    steps = sample_paths(oracle, n, 1, rng, block_depth=block_depth, max_depth=max_depth)
    return PathSample(tuple(int(s) for s in steps[0]))
