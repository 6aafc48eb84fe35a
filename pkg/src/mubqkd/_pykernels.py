"""numpy implementation of the trial-sampling loop (fallback for ``_ckernels``).

Every draw is a pure function of ``(key, trial, k)``: a SplitMix64 finaliser
applied to a Weyl-sequence counter. Categorical sampling counts the cdf
entries (all but the last) that are ``<= u``, which is what the compiled
linear scan computes for monotone cdfs.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
NDRAWS = 5


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def key_from_seed(seed: int) -> int:
    z = np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + GOLDEN
    return int(_mix(z)[0])


def uniforms(key: int, trials: np.ndarray, k: int) -> np.ndarray:
    t = np.asarray(trials).astype(np.uint64)
    x = np.uint64(key) + (t * np.uint64(NDRAWS) + np.uint64(k + 1)) * GOLDEN
    return (_mix(x) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _pick(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.searchsorted(cdf[:-1], u, side="right")


def tally_block(key, start, stop, d, basis_cdf, state_cdf, weyl_cdf, outcome_cdf, counts):
    trials = np.arange(start, stop, dtype=np.int64)
    if trials.size == 0:
        return
    nbas, nw = d + 1, d * d
    ra = _pick(basis_cdf, uniforms(key, trials, 0))
    na = _pick(state_cdf, uniforms(key, trials, 1))
    rb = _pick(basis_cdf, uniforms(key, trials, 2))
    w = _pick(weyl_cdf, uniforms(key, trials, 3))
    row = ((ra * d + na) * nw + w) * nbas + rb
    u = uniforms(key, trials, 4)
    nb = (outcome_cdf[row, :-1] <= u[:, None]).sum(axis=1)
    ncat = outcome_cdf.shape[1]
    idx = ((ra * d + na) * nbas + rb) * ncat + nb
    counts += np.bincount(idx, minlength=counts.size).astype(counts.dtype)
