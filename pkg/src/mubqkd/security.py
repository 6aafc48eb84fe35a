"""Asymptotic key rates of the (d+1)-basis protocol over GF(p^N).

Error statistics are Galois-field error vectors: ``q_Z[t]`` is the probability
that Alice's and Bob's Z outcomes differ by ``t`` (``a - b = t``), and
``q[r, t]`` the same for phase basis ``r``. The Bell-diagonal weights
``lam[j, k]`` are the probabilities of the Weyl error ``V_jk``; both are
related by an exact linear map over field labels.

Rates are in bits per sifted symbol.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import bisect
from scipy.special import entr, xlogy

from .galois import FieldCtx

PROB_TOL = 1e-9
CLAMP_TOL = 1e-9
THRESHOLD_XTOL = 1e-7
_LN2 = math.log(2.0)


class UnphysicalLambdaError(ValueError):
    """Bell-diagonal weights with entries below ``-CLAMP_TOL``."""

    def __init__(self, negatives):
        self.negatives = list(negatives)
        listing = ", ".join(f"lambda[{j},{k}]={v:.6g}" for j, k, v in self.negatives)
        super().__init__(f"unphysical Bell-diagonal weights: {listing}")


class NoThresholdError(ValueError):
    pass


class Source(str, enum.Enum):
    ANALYTIC = "analytic"
    SAMPLED = "sampled"


class RateMode(str, enum.Enum):
    FULL_LAMBDA = "full_lambda"
    AVERAGE_ERROR_BOUND = "average_error_bound"


def entropy(p) -> float:
    """Shannon entropy in bits with ``0 log 0 = 0``."""
    return float(entr(np.asarray(p, dtype=float)).sum() / _LN2)


def _check_prob(v: np.ndarray, name: str):
    if np.any(v < -PROB_TOL) or abs(float(v.sum()) - 1.0) > PROB_TOL:
        raise ValueError(f"{name} is not a probability vector: {v}")


@dataclass
class ErrorStats:
    """Error vectors for the Z basis and the ``d`` phase bases.

    Attributes
    ----------
    q_Z : ndarray, shape (d,)
    q : ndarray, shape (d, d)
        Row ``r`` is the error vector of phase basis ``r``.
    source : Source
    """

    q_Z: np.ndarray
    q: np.ndarray
    source: Source = Source.ANALYTIC

    def __post_init__(self):
        self.q_Z = np.asarray(self.q_Z, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        d = self.q_Z.shape[0]
        if self.q.shape != (d, d):
            raise ValueError(f"need {d} phase-basis vectors of length {d}, got {self.q.shape}")
        self.source = Source(self.source)
        _check_prob(self.q_Z, "q_Z")
        for r, row in enumerate(self.q):
            _check_prob(row, f"q[{r}]")

    @property
    def d(self) -> int:
        return self.q_Z.shape[0]

    @property
    def e_Z(self) -> float:
        """Symbol error ``sum_{t != 0} q_Z[t]``."""
        return math.fsum(self.q_Z[1:])

    @property
    def e_phase(self) -> np.ndarray:
        """Symbol error of each phase basis, summed over the non-zero shifts."""
        return np.array([math.fsum(row[1:]) for row in self.q])

    @property
    def e_bar(self) -> float:
        """Symbol error averaged over all ``d + 1`` bases."""
        return (self.e_Z + float(self.e_phase.sum())) / (self.d + 1)

    @property
    def e_bar_phase(self) -> float:
        return float(self.e_phase.mean())

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "source": self.source.value,
            "q_Z": self.q_Z.tolist(),
            "q": self.q.tolist(),
            "e_Z": self.e_Z,
            "e_phase": self.e_phase.tolist(),
            "e_bar": self.e_bar,
            "e_bar_convention": "mean over Z and all d phase bases",
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ErrorStats":
        return cls(data["q_Z"], data["q"], data.get("source", Source.ANALYTIC))


@dataclass
class LambdaMatrix:
    """Bell-diagonal weights ``lam[j, k]`` of ``|Phi_jk>``.

    Negative entries are kept; ``physical`` is False when any entry is below
    ``-CLAMP_TOL`` and ``negatives`` lists them as ``(j, k, value)``.
    """

    lam: np.ndarray
    physical: bool = field(init=False)
    negatives: list = field(init=False)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.ndim != 2 or self.lam.shape[0] != self.lam.shape[1]:
            raise ValueError(f"lambda must be square, got shape {self.lam.shape}")
        total = math.fsum(self.lam.ravel())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"lambda sums to {total!r}, not 1")
        bad = np.argwhere(self.lam < -CLAMP_TOL)
        self.negatives = [(int(j), int(k), float(self.lam[j, k])) for j, k in bad]
        self.physical = not self.negatives

    @property
    def d(self) -> int:
        return self.lam.shape[0]

    @property
    def lambda00(self) -> float:
        return float(self.lam[0, 0])

    def __array__(self, dtype=None, copy=None):
        return self.lam if dtype is None else self.lam.astype(dtype)


@dataclass
class RateReport:
    """Key-rate result.

    ``I_AB`` and ``chi_AE`` are only available in ``FULL_LAMBDA`` mode.
    """

    r_inf: float
    mode: RateMode
    I_AB: float | None = None
    chi_AE: float | None = None
    lambda00: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "r_inf": self.r_inf,
            "mode": RateMode(self.mode).value,
            "I_AB": self.I_AB,
            "chi_AE": self.chi_AE,
            "lambda00": self.lambda00,
            "diagnostics": self.diagnostics,
        }


# -- index algebra


def _phase_index(ctx: FieldCtx) -> np.ndarray:
    """``idx[s, j, t] = s*j - t`` over the field."""
    el = ctx.elements
    prod = ctx.mul(el[:, None], el[None, :])
    return ctx.sub(prod[:, :, None], el[None, None, :])


def q_from_lambda(ctx: FieldCtx, lam) -> ErrorStats:
    """Error vectors generated by Bell-diagonal weights ``lam``.

    ``q_Z[t] = sum_k lam[t, k]`` and ``q[k, t] = sum_j lam[j, k*j - t]``.
    """
    lam = np.asarray(lam, dtype=float)
    d = ctx.d
    idx = _phase_index(ctx)
    q_Z = np.array([math.fsum(row) for row in lam])
    q = np.empty((d, d))
    j = np.arange(d)
    for k in range(d):
        for t in range(d):
            q[k, t] = math.fsum(lam[j, idx[k, j, t]])
    return ErrorStats(q_Z, q, Source.ANALYTIC)


def lambda_from_q(ctx: FieldCtx, stats: ErrorStats) -> LambdaMatrix:
    """Invert :func:`q_from_lambda`.

    ``lam[j, k] = (sum_s q[s, s*j - k] + q_Z[j] - 1) / d``. Unphysical inputs
    yield negative entries, which are reported, not repaired.
    """
    d = ctx.d
    if stats.d != d:
        raise ValueError(f"stats are for d={stats.d}, field has d={d}")
    idx = _phase_index(ctx)
    s = np.arange(d)
    lam = np.empty((d, d))
    for j in range(d):
        for k in range(d):
            terms = list(stats.q[s, idx[s, j, k]])
            lam[j, k] = (math.fsum(terms + [stats.q_Z[j], -1.0])) / d
    return LambdaMatrix(lam)


# -- rates


def key_rate_full(ctx: FieldCtx, lam) -> RateReport:
    """``r = log2 d - H(lam)`` with the Holevo bound on Eve's information.

    Entries in ``(-CLAMP_TOL, 0)`` are clamped to zero and the matrix
    renormalised; anything more negative raises :class:`UnphysicalLambdaError`.
    """
    L = lam if isinstance(lam, LambdaMatrix) else LambdaMatrix(lam)
    if not L.physical:
        raise UnphysicalLambdaError(L.negatives)
    w = L.lam.copy()
    clamped = [(int(j), int(k), float(w[j, k])) for j, k in np.argwhere(w < 0)]
    if clamped:
        w[w < 0] = 0.0
        w /= w.sum()
    d = ctx.d
    if w.shape != (d, d):
        raise ValueError(f"lambda shape {w.shape} does not match d={d}")
    q_Z = w.sum(axis=1)
    h_lam = entropy(w.ravel())
    h_z = entropy(q_Z)
    log_d = math.log2(d)
    return RateReport(
        r_inf=log_d - h_lam,
        mode=RateMode.FULL_LAMBDA,
        I_AB=log_d - h_z,
        chi_AE=h_lam - h_z,
        lambda00=float(w[0, 0]),
        diagnostics={"clamped": clamped},
    )


def lambda00_from_e_bar(d: int, e_bar: float) -> float:
    return 1.0 - (d + 1) / d * e_bar


def avg_bound_rate(d: int, lambda00: float) -> float:
    """Rate with the non-identity weights spread uniformly (maximum entropy)."""
    tail = 1.0 - lambda00
    return (
        math.log2(d)
        + float(xlogy(lambda00, lambda00)) / _LN2
        + float(xlogy(tail, tail / (d * d - 1))) / _LN2
    )


def key_rate_avg_bound(d: int, e_bar: float | None = None, *, lambda00: float | None = None) -> RateReport:
    """Lower bound on the key rate from the all-basis average symbol error.

    Give either ``e_bar`` (averaged over all ``d + 1`` bases) or ``lambda00``.
    """
    if (e_bar is None) == (lambda00 is None):
        raise ValueError("give exactly one of e_bar and lambda00")
    if e_bar is not None:
        e_max = d / (d + 1)
        if not 0.0 <= e_bar <= e_max:
            raise ValueError(f"e_bar={e_bar} outside [0, {e_max}]")
        lambda00 = lambda00_from_e_bar(d, e_bar)
    elif not 0.0 <= lambda00 <= 1.0:
        raise ValueError(f"lambda00={lambda00} outside [0, 1]")
    return RateReport(
        r_inf=avg_bound_rate(d, lambda00),
        mode=RateMode.AVERAGE_ERROR_BOUND,
        lambda00=lambda00,
        diagnostics={"e_bar": e_bar, "e_bar_convention": "mean over Z and all d phase bases"},
    )


def threshold(d: int, rate_fn: Callable[[float], float]) -> float:
    """Average error at which ``rate_fn`` crosses zero.

    ``rate_fn`` maps ``e_bar`` to a rate and must decrease on
    ``[0, d/(d+1))``.
    """
    lo, hi = 1e-9, d / (d + 1) - 1e-9
    f_lo, f_hi = rate_fn(lo), rate_fn(hi)
    if f_lo * f_hi > 0:
        raise NoThresholdError(f"rate has the same sign at e={lo} ({f_lo}) and e={hi} ({f_hi})")
    return float(bisect(rate_fn, lo, hi, xtol=THRESHOLD_XTOL))


def symmetric_error_vector(d: int, e: float) -> np.ndarray:
    """``(1 - e, e/(d-1), ..., e/(d-1))``."""
    v = np.full(d, e / (d - 1))
    v[0] = 1.0 - e
    return v


def rate_two_basis(d: int, q_Z, q_0) -> float:
    """Two-basis rate ``log2 d - H(q_Z) - H(q_0)``."""
    q_Z = np.asarray(q_Z, dtype=float)
    q_0 = np.asarray(q_0, dtype=float)
    return math.log2(d) - entropy(q_Z) - entropy(q_0)


def rate_two_basis_symmetric(d: int, e: float) -> float:
    """Two-basis rate with both error vectors symmetric at symbol error ``e``."""
    v = symmetric_error_vector(d, e)
    return rate_two_basis(d, v, v)


# -- correlated shift noise


def correlated_lambda(d: int, e_Z: float) -> np.ndarray:
    if not 0.0 <= e_Z < 1.0:
        raise ValueError(f"e_Z={e_Z} outside [0, 1)")
    lam = np.diag(np.full(d, e_Z / (d - 1)))
    lam[0, 0] = 1.0 - e_Z
    return lam


def correlated_rate_two_basis(d: int, e_bar: float) -> float:
    """Closed-form two-basis rate under correlated shifts (``e_bar = e_Z``)."""
    return math.log2(d) + 2.0 * (float(xlogy(1.0 - e_bar, 1.0 - e_bar)) + float(xlogy(e_bar, e_bar / (d - 1)))) / _LN2


def correlated_rate_full(d: int, e_bar: float) -> float:
    """Closed-form (d+1)-basis rate under correlated shifts (``e_bar = d e_Z/(d+1)``)."""
    x = (d + 1) / d * e_bar
    return math.log2(d) + (float(xlogy(1.0 - x, 1.0 - x)) + float(xlogy(x, x / (d - 1)))) / _LN2


@dataclass
class CorrelatedModel:
    e_Z: float
    lam: LambdaMatrix
    stats: ErrorStats
    e_bar_two_basis: float
    e_bar_full: float
    rate_two_basis: float
    rate_full: float


def correlated_model(ctx: FieldCtx, e_Z: float) -> CorrelatedModel:
    """Shift errors correlated between Z and the 0th phase basis.

    Only ``lam[i, i]`` is non-zero: ``1 - e_Z`` at ``i = 0`` and
    ``e_Z/(d-1)`` elsewhere. Rates are computed from the weights, not the
    closed forms.
    """
    d = ctx.d
    lam = LambdaMatrix(correlated_lambda(d, e_Z))
    stats = q_from_lambda(ctx, lam.lam)
    return CorrelatedModel(
        e_Z=e_Z,
        lam=lam,
        stats=stats,
        e_bar_two_basis=stats.e_Z,
        e_bar_full=stats.e_bar,
        rate_two_basis=rate_two_basis(d, stats.q_Z, stats.q[0]),
        rate_full=key_rate_full(ctx, lam).r_inf,
    )
