"""Cascade environments on the binary tree and their martingales.

Conventions used throughout the package:

* A vertex is a finite path of +/-1 steps.  The canonical order at each
  depth puts the +1 child before the -1 child; the rank of a vertex is its
  position in that order.  Vertices are addressed by heap ids: the root is
  1, the +1 child of node i is 2i, the -1 child is 2i + 1, so a vertex of
  depth m has id 2^m + rank.
* The weight X_v of a vertex of depth >= 1 is one variate of the disorder
  law drawn from the environment's counter stream at counter node_id(v).
  Weights at distinct vertices are independent draws; the same (seed,
  vertex) always reproduces the same weight, in any traversal order.
* Partition function of the subtree below v:
      Z_0(v) = 1,   Z_k(v) = sum_{|t|=k} prod_{j<=k} X_{(v*t)|j} * 2^{-k},
  a positive mean-one martingale in k.
* Derivative martingale:
      D_k(v) = sum_{|t|=k} V(t) exp(-V(t)),
      V(t) = k ln 2 - sum_{j<=k} ln X_{(v*t)|j},
  the boundary-case normalization of the branching random walk with step
  ln 2 - ln X.  At the critical point E[X ln X] = ln 2 this is exactly the
  boundary case: E sum_{|t|=1} e^{-V(t)} = E X = 1 and
  E sum_{|t|=1} V(t) e^{-V(t)} = ln 2 - E[X ln X] = 0, so D is a zero-mean
  martingale started from D_0 = 0 whose a.s. limit is positive at
  criticality.

Traversals are streaming and blockwise: the tree is never materialized.
Level sweeps descend in dense blocks of at most 2^block_depth leaves;
deeper trees are split at a fixed depth into subtrees swept independently
and combined in canonical vertex order.  The split structure depends only
on (depth, block_depth), never on the worker count, so serial and parallel
runs produce bit-identical results.  Leaf products are carried as
log-weights; Z-type sums use log-sum-exp and D-type sums use a max-shifted
sign-aware summation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .disorder import DisorderSpec
from .errors import DepthCapError
from .rng import bits_for_counters

LN2 = math.log(2.0)

# Desk-scale guards: a depth-26 traversal touches ~1.3e8 vertices.
DEPTH_CAP = 26
ENUM_CAP = 16
BLOCK_DEPTH = 16

_U1 = np.uint64(1)


@dataclass(frozen=True)
class Vertex:
    """A finite +/-1 path; the root is the empty path."""

    steps: tuple[int, ...] = ()

    def __post_init__(self):
        if any(s not in (-1, 1) for s in self.steps):
            raise ValueError("vertex steps must be +1 or -1")

    @classmethod
    def root(cls) -> "Vertex":
        return cls(())

    @classmethod
    def from_string(cls, text: str) -> "Vertex":
        """Parse '+-+' notation; the empty string is the root."""
        mapping = {"+": 1, "-": -1}
        try:
            return cls(tuple(mapping[ch] for ch in text.strip()))
        except KeyError as exc:
            raise ValueError(f"invalid vertex character {exc.args[0]!r}") from None

    @classmethod
    def from_rank(cls, depth: int, rank: int) -> "Vertex":
        """Vertex at ``depth`` with canonical position ``rank`` (0-based)."""
        if depth < 0 or not 0 <= rank < (1 << depth):
            raise ValueError("rank out of range for depth")
        steps = tuple(1 if not (rank >> (depth - 1 - j)) & 1 else -1 for j in range(depth))
        return cls(steps)

    @property
    def depth(self) -> int:
        return len(self.steps)

    @property
    def rank(self) -> int:
        r = 0
        for s in self.steps:
            r = (r << 1) | (s < 0)
        return r

    @property
    def node_id(self) -> int:
        return (1 << self.depth) | self.rank

    def child(self, step: int) -> "Vertex":
        if step not in (-1, 1):
            raise ValueError("step must be +1 or -1")
        return Vertex(self.steps + (step,))

    def concat(self, other: "Vertex") -> "Vertex":
        return Vertex(self.steps + other.steps)

    def prefix(self, depth: int) -> "Vertex":
        if not 0 <= depth <= self.depth:
            raise ValueError("prefix depth out of range")
        return Vertex(self.steps[:depth])

    def __str__(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.steps)

    def __repr__(self) -> str:
        return f"Vertex({str(self)!r})"


@dataclass(frozen=True)
class WeightOracle:
    """One cascade environment: a pure map (seed, vertex) -> weight."""

    spec: DisorderSpec
    seed: int

    def log_weight_ids(self, ids: np.ndarray) -> np.ndarray:
        """ln X for an array of heap ids (vectorized hot path)."""
        return self.spec.log_weights_from_bits(bits_for_counters(self.seed, ids))

    def log_weight_at(self, v: Vertex) -> float:
        if v.depth == 0:
            raise ValueError("the root carries no weight")
        return float(self.log_weight_ids(np.array([v.node_id], dtype=np.uint64))[0])

    def weight_at(self, v: Vertex) -> float:
        return math.exp(self.log_weight_at(v))

    def path_log_weight(self, v: Vertex) -> float:
        """sum_{j<=|v|} ln X_{v|j}; 0 for the root."""
        m = v.depth
        if m == 0:
            return 0.0
        ids = np.array([v.node_id >> (m - j) for j in range(1, m + 1)], dtype=np.uint64)
        return float(self.log_weight_ids(ids).sum())


def _require_depth(total_depth: int, max_depth: int | None):
    cap = DEPTH_CAP if max_depth is None else max_depth
    if total_depth > cap:
        raise DepthCapError(f"requested tree depth {total_depth} exceeds cap {cap}")


def _children(ids: np.ndarray) -> np.ndarray:
    out = np.empty(2 * ids.size, dtype=np.uint64)
    left = ids << _U1
    out[0::2] = left
    out[1::2] = left | _U1
    return out


def _logsumexp(values: np.ndarray) -> float:
    shift = values.max()
    return float(shift + np.log(np.exp(values - shift).sum()))


class _LevelPartial:
    """Per-subtree reduction of one tree level, combinable in vertex order."""

    __slots__ = ("lse", "d", "lse_tilted")

    def __init__(self, level: int, logw: np.ndarray, pos: np.ndarray | None, tilt: float | None):
        shift = float(logw.max())
        t = np.exp(logw - shift)
        s1 = float(t.sum())
        self.lse = shift + math.log(s1)
        # D_level = exp(shift - level ln2) * (level ln2 * sum t - sum logw t)
        s2 = float((logw * t).sum())
        scale = shift - level * LN2
        self.d = math.exp(scale) * (level * LN2 * s1 - s2) if scale > -745.0 else 0.0
        if tilt is not None:
            self.lse_tilted = _logsumexp(logw + tilt * pos)
        else:
            self.lse_tilted = None


def _descend_block(oracle, root_id, depth, seed_logw, seed_pos, base_level, tilt, want, acc):
    """Dense sweep of one block; returns the final-level (ids, logw, pos)."""
    ids = np.array([root_id], dtype=np.uint64)
    logw = np.array([seed_logw], dtype=np.float64)
    pos = None if tilt is None else np.array([seed_pos], dtype=np.float64)
    for j in range(1, depth + 1):
        ids = _children(ids)
        lw = oracle.log_weight_ids(ids)
        logw = np.repeat(logw, 2)
        logw += lw
        if tilt is not None:
            pos = np.repeat(pos, 2)
            pos[0::2] += 1.0
            pos[1::2] -= 1.0
        level = base_level + j
        if want(level):
            acc.setdefault(level, []).append(_LevelPartial(level, logw, pos, tilt))
    return ids, logw, pos


def _sweep(oracle, root_id, depth, seed_logw, seed_pos, base_level, tilt, want,
           block_depth, jobs):
    """Blockwise level sweep below one node; partials in canonical order."""
    acc: dict[int, list[_LevelPartial]] = {}
    if depth <= block_depth:
        _descend_block(oracle, root_id, depth, seed_logw, seed_pos, base_level, tilt, want, acc)
        return acc

    split = min(depth - block_depth, block_depth)
    ids, logw, pos = _descend_block(
        oracle, root_id, split, seed_logw, seed_pos, base_level, tilt, want, acc
    )
    tasks = [
        (oracle, int(ids[i]), depth - split, float(logw[i]),
         0.0 if pos is None else float(pos[i]), base_level + split, tilt, want,
         block_depth, 1)
        for i in range(ids.size)
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            subaccs = list(pool.map(lambda t: _sweep(*t), tasks))
    else:
        subaccs = [_sweep(*t) for t in tasks]
    # Combination must follow canonical vertex order for bit-identical output.
    for sub in subaccs:
        for level, partials in sub.items():
            acc.setdefault(level, []).extend(partials)
    return acc


@dataclass(frozen=True)
class LevelSums:
    """Per-level reductions of one subtree sweep.

    ``log_z[k]`` is log Z_k(v) and ``d[k]`` is D_k(v) for k = 0..depth.
    When the sweep was restricted to the last level, interior entries are
    NaN.  ``log_z_tilted`` is log of the exponentially tilted partition
    sum sum_t exp(tilt * pos(t)) prod X 2^{-k}, present when a tilt was
    requested.
    """

    depth: int
    log_z: np.ndarray
    d: np.ndarray
    log_z_tilted: np.ndarray | None = None


def _level_sums_by_id(oracle: WeightOracle, node_id: int, node_depth: int, depth: int, *,
                      tilt: float | None = None, levels: str = "all",
                      block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                      max_depth: int | None = None) -> LevelSums:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if levels not in ("all", "last"):
        raise ValueError("levels must be 'all' or 'last'")
    if block_depth < 1:
        raise ValueError("block_depth must be >= 1")
    _require_depth(node_depth + depth, max_depth)

    log_sums = np.full(depth + 1, np.nan)
    d = np.full(depth + 1, np.nan)
    log_sums[0] = 0.0
    d[0] = 0.0
    tilted = None
    if tilt is not None:
        tilted = np.full(depth + 1, np.nan)
        tilted[0] = 0.0
    if depth == 0:
        return LevelSums(0, log_sums, d, tilted)

    want = (lambda k: True) if levels == "all" else (lambda k: k == depth)
    acc = _sweep(oracle, node_id, depth, 0.0, 0.0, 0, tilt, want, block_depth, jobs)
    for level, partials in acc.items():
        lses = np.array([p.lse for p in partials])
        log_sums[level] = _logsumexp(lses) - level * LN2
        d[level] = float(np.sum(np.array([p.d for p in partials])))
        if tilt is not None:
            tilted[level] = _logsumexp(np.array([p.lse_tilted for p in partials])) - level * LN2
    return LevelSums(depth, log_sums, d, tilted)


def subtree_level_sums(oracle: WeightOracle, v: Vertex, depth: int, *,
                       tilt: float | None = None, levels: str = "all",
                       block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                       max_depth: int | None = None) -> LevelSums:
    """Sweep the subtree below ``v`` and reduce every level (or just the last).

    This is the single traversal primitive behind Z, D, the Seneta-Heyde
    series and the tilted sums; one call touches each of the 2^depth leaf
    paths exactly once with O(2^block_depth) working memory.
    """
    return _level_sums_by_id(oracle, v.node_id, v.depth, depth, tilt=tilt,
                             levels=levels, block_depth=block_depth, jobs=jobs,
                             max_depth=max_depth)


def log_partition_function(oracle: WeightOracle, v: Vertex, k: int, *,
                           block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                           max_depth: int | None = None) -> float:
    """log Z_k(v)."""
    sums = subtree_level_sums(oracle, v, k, levels="last", block_depth=block_depth,
                              jobs=jobs, max_depth=max_depth)
    return float(sums.log_z[k])


def partition_function(oracle: WeightOracle, v: Vertex, k: int, *,
                       block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                       max_depth: int | None = None) -> float:
    """Z_k(v), the subtree partition function."""
    return math.exp(log_partition_function(oracle, v, k, block_depth=block_depth,
                                           jobs=jobs, max_depth=max_depth))


def derivative_martingale(oracle: WeightOracle, v: Vertex, k: int, *,
                          block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                          max_depth: int | None = None) -> float:
    """D_k(v); negative values at small k are genuine and are not clipped."""
    sums = subtree_level_sums(oracle, v, k, levels="last", block_depth=block_depth,
                              jobs=jobs, max_depth=max_depth)
    return float(sums.d[k])


@dataclass(frozen=True)
class MartingaleSeries:
    """Z_k, D_k and Seneta-Heyde ratios for k = 1..depth_max at the root.

    ``ratio[k-1] = sqrt(k) Z_k / D_k`` where D_k > 0; entries where D_k <= 0
    are NaN (the ratio is defined only on the positive event).
    """

    depth_max: int
    z: np.ndarray
    d: np.ndarray
    ratio: np.ndarray
    log_z: np.ndarray

    @property
    def valid_ratio_mask(self) -> np.ndarray:
        return self.d > 0.0


def martingale_series(oracle: WeightOracle, n_max: int, *,
                      block_depth: int = BLOCK_DEPTH, jobs: int = 1,
                      max_depth: int | None = None) -> MartingaleSeries:
    """One root traversal producing Z_k, D_k, and ratios for all k <= n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    sums = subtree_level_sums(oracle, Vertex.root(), n_max, levels="all",
                              block_depth=block_depth, jobs=jobs, max_depth=max_depth)
    log_z = sums.log_z[1:]
    z = np.exp(log_z)
    d = sums.d[1:]
    k = np.arange(1, n_max + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0.0, np.sqrt(k) * z / d, np.nan)
    return MartingaleSeries(n_max, z, d, ratio, log_z)


def enumerate_leaves(oracle: WeightOracle, v: Vertex, k: int, *,
                     max_depth: int | None = None) -> list[tuple[Vertex, float, float]]:
    """Brute-force enumeration of the 2^k descent paths below ``v``.

    Returns (relative leaf path, product of weights along it, branching-walk
    position V).  Products are accumulated by direct multiplication in
    linear space, independently of the log-space sweeps, so this is the
    reference reduction for Z and D at small depth.
    """
    cap = ENUM_CAP if max_depth is None else min(max_depth, ENUM_CAP)
    if k < 0:
        raise ValueError("depth must be nonnegative")
    if k > cap:
        raise DepthCapError(f"enumeration depth {k} exceeds cap {cap}")
    ids = np.array([v.node_id], dtype=np.uint64)
    prods = np.array([1.0])
    log_along = np.array([0.0])
    for _ in range(k):
        ids = _children(ids)
        w = np.exp(oracle.log_weight_ids(ids))
        prods = np.repeat(prods, 2)
        prods *= w
        log_along = np.repeat(log_along, 2)
        log_along += np.log(w)
    positions = k * LN2 - log_along
    return [
        (Vertex.from_rank(k, r), float(prods[r]), float(positions[r]))
        for r in range(1 << k)
    ]
