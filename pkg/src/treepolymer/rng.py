"""Counter-based deterministic random bits.

All randomness that defines a cascade environment flows through
``bits_for_counters``: a splitmix64 output stream indexed by an integer
counter, offset by the environment seed.  Hashing counters instead of
advancing sequential generator state is what makes weights addressable --
any vertex's weight can be regenerated in isolation, in any order, on any
number of workers, with bit-identical results.

Conventions (documented here once, relied on everywhere):

* ``bits_for_counters(seed, c) = mix64(seed + (c + 1) * GOLDEN)`` where
  ``mix64`` is the splitmix64 finalizer and GOLDEN is 2^64 / phi rounded to
  odd.  This is literally the splitmix64 sequence with base ``seed``
  sampled at position ``c``.
* Replicate seeds for ensembles come from ``replicate_seed(base, i)``,
  the same stream keyed by a fixed salt so replicate-seed derivation and
  vertex-counter hashing never share counter values structurally.
* Uniforms are the 53 high bits mapped to the open interval (0, 1):
  ``((bits >> 11) + 0.5) * 2^-53``, so inverse-CDF transforms never see 0 or 1.

All uint64 arithmetic is array arithmetic (wraps modulo 2^64 silently);
numpy scalar arithmetic would emit overflow warnings and is avoided.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_REPLICATE_SALT = 0xD6E8FEB86659FD93

_U53_INV = float(2.0**-53)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64_inplace(z: np.ndarray) -> np.ndarray:
    t = z >> _S30
    z ^= t
    z *= _M1
    np.right_shift(z, _S27, out=t)
    z ^= t
    z *= _M2
    np.right_shift(z, _S31, out=t)
    z ^= t
    return z


def mix64(z) -> np.ndarray:
    """Splitmix64 finalizer, vectorized over uint64 arrays."""
    z = np.array(z, dtype=np.uint64, copy=True)
    return _mix64_inplace(z)


def bits_for_counters(seed: int, counters: np.ndarray) -> np.ndarray:
    """64 random bits per counter: splitmix64 stream ``seed`` at each position."""
    c = np.asarray(counters, dtype=np.uint64)
    z = c + np.uint64(1)
    z *= GOLDEN
    z += np.uint64(int(seed) & _MASK64)
    return _mix64_inplace(z)


def uniform_open01(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles in the open interval (0, 1)."""
    u = (bits >> _S11).astype(np.float64)
    u += 0.5
    u *= _U53_INV
    return u


def replicate_seed(base_seed: int, index: int) -> int:
    """Derived per-replicate environment seed; pairwise distinct in ``index``.

    mix64 is a bijection on uint64 and the salted counter is affine in the
    index, so distinct indices never collide for a fixed base seed.
    """
    if index < 0:
        raise ValueError("replicate index must be nonnegative")
    c = np.array([index ^ _REPLICATE_SALT], dtype=np.uint64)
    return int(bits_for_counters(base_seed, c)[0])
