"""Seeded Monte-Carlo simulation of the (d+1)-basis prepare-and-measure protocol.

Each trial draws Alice's basis and state, a Weyl error ``V_ij`` with the
channel's Bell-diagonal weight ``lam[i, j]``, and Bob's basis, then samples
Bob's outcome. Phase bases carry the Durt labels, so sampled error vectors
are directly comparable with :func:`mubqkd.security.q_from_lambda`.

Every random draw is a pure function of ``(seed, trial, draw)``; trials are
split into blocks whose counts are summed, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .galois import FieldCtx
from .mub import Construction, build_basis, weyl
from .optics import SwitchMode, Topology, build_layout, measurement_operators
from .security import (
    ErrorStats,
    LambdaMatrix,
    RateReport,
    Source,
    UnphysicalLambdaError,
    correlated_lambda,
    key_rate_avg_bound,
    key_rate_full,
    lambda_from_q,
)

PROB_FLOOR = 1e-14
DEFAULT_BLOCK = 1 << 16
MAX_TABLE_ENTRIES = 1 << 26


class InsufficientDataError(ValueError):
    pass


class ChannelKind(str, enum.Enum):
    IDENTITY = "identity"
    DEPOLARIZING = "depolarizing"
    CORRELATED = "correlated"
    BELL = "bell"


class Backend(str, enum.Enum):
    IDEAL = "ideal"
    OPTICS = "optics"


@dataclass
class ChannelModel:
    """Mixture of Weyl errors ``rho -> sum lam[i, j] V_ij^+ rho V_ij``.

    Use the constructors rather than building ``weights`` by hand.
    """

    kind: ChannelKind
    weights: np.ndarray
    parameter: float | None = None

    def __post_init__(self):
        self.kind = ChannelKind(self.kind)
        self.weights = np.asarray(self.weights, dtype=float)
        LambdaMatrix(self.weights)
        if np.any(self.weights < 0):
            raise ValueError("channel weights must be non-negative")

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def identity(cls, d: int) -> "ChannelModel":
        w = np.zeros((d, d))
        w[0, 0] = 1.0
        return cls(ChannelKind.IDENTITY, w)

    @classmethod
    def depolarizing(cls, d: int, strength: float) -> "ChannelModel":
        """``lam[0, 0] = 1 - s (d^2 - 1)/d^2``, every other weight ``s/d^2``."""
        if not 0.0 <= strength <= d * d / (d * d - 1):
            raise ValueError(f"depolarizing strength {strength} out of range")
        w = np.full((d, d), strength / (d * d))
        w[0, 0] = 1.0 - strength * (d * d - 1) / (d * d)
        return cls(ChannelKind.DEPOLARIZING, w, strength)

    @classmethod
    def depolarizing_from_error(cls, d: int, e: float) -> "ChannelModel":
        """Depolarizing channel with symbol error ``e`` in every matched basis."""
        return cls.depolarizing(d, e * d / (d - 1))

    @classmethod
    def correlated(cls, d: int, e_Z: float) -> "ChannelModel":
        return cls(ChannelKind.CORRELATED, correlated_lambda(d, e_Z), e_Z)

    @classmethod
    def bell(cls, lam) -> "ChannelModel":
        return cls(ChannelKind.BELL, np.asarray(lam, dtype=float))

    def kraus(self, ctx: FieldCtx) -> list[np.ndarray]:
        d = ctx.d
        if d != self.d:
            raise ValueError(f"channel is for d={self.d}, field has d={d}")
        return [
            math.sqrt(self.weights[i, j]) * weyl(ctx, i, j).conj().T
            for i in range(d)
            for j in range(d)
            if self.weights[i, j] > 0
        ]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "parameter": self.parameter, "weights": self.weights.tolist()}


@dataclass
class RunConfig:
    """Simulation settings.

    ``basis_probs`` has ``d + 1`` entries; the last one is the Z basis. It
    defaults to uniform. ``workers`` only affects speed.
    """

    ctx: FieldCtx
    trials: int
    seed: int = 0
    basis_probs: np.ndarray | None = None
    backend: Backend = Backend.IDEAL
    topology: Topology = Topology.TDM
    switch_mode: SwitchMode = SwitchMode.PASSIVE
    workers: int = 1
    block_size: int = DEFAULT_BLOCK
    kernel: str | None = None

    def __post_init__(self):
        d = self.ctx.d
        if self.trials < 0:
            raise ValueError("trials must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.basis_probs is None:
            self.basis_probs = np.full(d + 1, 1.0 / (d + 1))
        self.basis_probs = np.asarray(self.basis_probs, dtype=float)
        if self.basis_probs.shape != (d + 1,):
            raise ValueError(f"basis_probs needs {d + 1} entries")
        if np.any(self.basis_probs < 0) or abs(self.basis_probs.sum() - 1.0) > 1e-9:
            raise ValueError("basis_probs must be a probability distribution")
        if self.workers < 1 or self.block_size < 1:
            raise ValueError("workers and block_size must be positive")
        self.backend = Backend(self.backend)
        self.topology = Topology(self.topology)
        self.switch_mode = SwitchMode(self.switch_mode)


def _cdf(p: np.ndarray) -> np.ndarray:
    """Cumulative distribution along the last axis, pinned to 1 after the last non-zero."""
    p = np.where(p < PROB_FLOOR, 0.0, p)
    p = p / p.sum(axis=-1, keepdims=True)
    c = np.cumsum(p, axis=-1)
    n = p.shape[-1]
    last = n - 1 - np.argmax(p[..., ::-1] > 0, axis=-1)
    c[np.arange(n) >= last[..., None]] = 1.0
    return np.ascontiguousarray(c)


def outcome_probabilities(ctx: FieldCtx, channel: ChannelModel, config: RunConfig | None = None) -> np.ndarray:
    """``P[r_a, n_a, w, r_b, n_b]`` for Weyl error ``w = i*d + j``.

    The last outcome index ``d`` is "not detected"; it is zero for the ideal
    backend.
    """
    d = ctx.d
    n_entries = (d + 1) ** 3 * d**3
    if n_entries > MAX_TABLE_ENTRIES:
        raise ValueError(f"outcome table for d={d} has {n_entries} entries, limit {MAX_TABLE_ENTRIES}")
    backend = Backend.IDEAL if config is None else config.backend
    bases = [build_basis(ctx, r, Construction.DURT) for r in range(d + 1)]
    if backend is Backend.IDEAL:
        meas = [B.conj().T for B in bases]
    else:
        layout = build_layout(ctx, config.topology, config.switch_mode)
        meas = measurement_operators(ctx, layout, Construction.DURT)
    P = np.zeros((d + 1, d, d * d, d + 1, d + 1))
    for i in range(d):
        for j in range(d):
            Vd = weyl(ctx, i, j).conj().T
            for ra in range(d + 1):
                out = Vd @ bases[ra]
                for rb in range(d + 1):
                    prob = (np.abs(meas[rb] @ out) ** 2).T
                    P[ra, :, i * d + j, rb, :d] = prob
    P[..., d] = np.clip(1.0 - P[..., :d].sum(axis=-1), 0.0, None)
    return P


@dataclass
class TallyMatrix:
    """Event counts ``counts[r_a, n_a, r_b, n_b]``; ``n_b = d`` counts lost photons."""

    ctx: FieldCtx
    counts: np.ndarray
    seed: int = 0
    backend: Backend = Backend.IDEAL

    @property
    def d(self) -> int:
        return self.ctx.d

    @property
    def detected(self) -> np.ndarray:
        return self.counts[..., : self.d]

    @property
    def lost(self) -> np.ndarray:
        return self.counts[..., self.d]

    @property
    def trials(self) -> int:
        return int(self.counts.sum())

    def conditional(self) -> np.ndarray:
        """Detection-conditioned ``P[r_a, n_a, r_b, n_b]``; NaN for empty rows."""
        det = self.detected.astype(float)
        tot = det.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return det / tot

    def rows(self):
        """``(r_a, n_a, r_b, n_b, count, prob)`` over detected events; basis ``d`` is Z."""
        cond = self.conditional()
        d = self.d
        for ra in range(d + 1):
            for na in range(d):
                for rb in range(d + 1):
                    for nb in range(d):
                        yield ra, na, rb, nb, int(self.detected[ra, na, rb, nb]), float(cond[ra, na, rb, nb])


def _split(trials: int, block: int) -> list[tuple[int, int]]:
    return [(s, min(s + block, trials)) for s in range(0, trials, block)]


def run_protocol(config: RunConfig, channel: ChannelModel) -> TallyMatrix:
    """Sample ``config.trials`` protocol rounds through ``channel``."""
    ctx = config.ctx
    d = ctx.d
    impl = kernels.get_backend(config.kernel)
    P = outcome_probabilities(ctx, channel, config)
    # kernel row index: ((r_a*d + n_a)*d^2 + w)*(d+1) + r_b
    outcome_cdf = _cdf(P.reshape(-1, d + 1))
    basis_cdf = _cdf(config.basis_probs)
    state_cdf = _cdf(np.full(d, 1.0 / d))
    weyl_cdf = _cdf(channel.weights.reshape(-1))
    key = impl.key_from_seed(config.seed)
    size = (d + 1) * d * (d + 1) * (d + 1)

    def work(span):
        counts = np.zeros(size, dtype=np.int64)
        impl.tally_block(key, span[0], span[1], d, basis_cdf, state_cdf, weyl_cdf, outcome_cdf, counts)
        return counts

    spans = _split(config.trials, config.block_size)
    total = np.zeros(size, dtype=np.int64)
    if config.workers == 1:
        for span in spans:
            total += work(span)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for counts in pool.map(work, spans):
                total += counts
    return TallyMatrix(ctx, total.reshape(d + 1, d, d + 1, d + 1), config.seed, config.backend)


def stats_from_tally(tally: TallyMatrix) -> ErrorStats:
    """Empirical error vectors ``q[r, t] = Pr(a - b = t | both used basis r)``."""
    ctx = tally.ctx
    d = ctx.d
    el = ctx.elements
    diff = ctx.sub(el[:, None], el[None, :])
    q = np.zeros((d + 1, d))
    for r in range(d + 1):
        block = tally.detected[r, :, r, :]
        n = block.sum()
        if n == 0:
            name = "Z" if r == d else f"phase basis {r}"
            raise InsufficientDataError(f"no detected events with both parties in {name}")
        q[r] = np.bincount(diff.ravel(), weights=block.ravel(), minlength=d) / n
    return ErrorStats(q[d], q[:d], Source.SAMPLED)


def binomial_sigma(tally: TallyMatrix) -> np.ndarray:
    """Binomial standard errors of the sampled error vectors.

    Rows ``0..d-1`` are the phase bases, row ``d`` is Z.
    """
    stats = stats_from_tally(tally)
    d = tally.d
    n = np.array([tally.detected[r, :, r, :].sum() for r in range(d + 1)], dtype=float)
    q = np.vstack([stats.q, stats.q_Z])
    return np.sqrt(q * (1 - q) / n[:, None])


@dataclass
class EndToEnd:
    tally: TallyMatrix
    stats: ErrorStats
    lam: LambdaMatrix
    bound: RateReport
    full: RateReport | None = None
    diagnostics: dict = field(default_factory=dict)


def end_to_end(config: RunConfig, channel: ChannelModel) -> EndToEnd:
    """Simulate, estimate error vectors and evaluate both rate formulas.

    The full-lambda rate is omitted when the estimated weights are unphysical.
    """
    ctx = config.ctx
    tally = run_protocol(config, channel)
    stats = stats_from_tally(tally)
    lam = lambda_from_q(ctx, stats)
    bound = key_rate_avg_bound(ctx.d, min(stats.e_bar, ctx.d / (ctx.d + 1)))
    full = None
    diagnostics = {}
    try:
        full = key_rate_full(ctx, lam)
    except UnphysicalLambdaError as exc:
        diagnostics["unphysical"] = exc.negatives
    return EndToEnd(tally, stats, lam, bound, full, diagnostics)
