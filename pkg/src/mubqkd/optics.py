"""Time-bin simulation of the cascaded-interferometer measurement network.

A phase-basis measurement ``B[r] = D[r] B[0]`` is realised as a phase
modulator (``conj(D[r])`` applied slot by slot) followed by an analyser for
``B[0]``, the N-fold tensor power of the p-point DFT. The analyser is a
cascade of p-arm delay interferometers; stage ``k`` has arm delays
``j * p**(N-1-k)`` (in slot units) and interferes digit ``N-1-k`` of the slot
index. Splitters are p-point DFT matrices (the real Hadamard for p = 2).

Topologies:

* ``TDM``: one interferometer per stage; output port ``q`` of stage ``k`` is
  delayed by ``q * tau'_k`` before entering input port ``q`` of stage ``k+1``.
* ``TREE``: every output port feeds its own interferometer; ``(d-1)/(p-1)``
  interferometers, ``d`` detectors.

In ``ACTIVE`` mode each input splitter is a time-scheduled switch that sends
the slot with digit value ``v`` into arm ``p-1-v``, so all arms recombine in
one slot and no probability is discarded.

Amplitudes are tracked per interferometric history ("branch"); physical
detection amplitudes are the branch sums at equal ``(path, slot)``.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .galois import FieldCtx
from .mub import Construction, build_basis, build_diag, build_fourier, build_wf_basis, equivalence_map

AMP_TOL = 1e-13


class Topology(str, enum.Enum):
    TREE = "tree"
    TDM = "tdm"


class SwitchMode(str, enum.Enum):
    PASSIVE = "passive"
    ACTIVE = "active"


class LayoutError(ValueError):
    """The network cannot realise the intended measurement."""


Path = tuple[int, ...]


@dataclass
class TemporalState:
    """Amplitudes on ``(path, slot)``; each path holds a slot array from slot 0."""

    amplitudes: dict[Path, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_slots(cls, amps: Sequence[complex], path: Path = ()) -> "TemporalState":
        return cls({tuple(path): np.asarray(amps, dtype=complex)})

    def __getitem__(self, key: tuple[Path, int]) -> complex:
        path, slot = key
        arr = self.amplitudes.get(tuple(path))
        if arr is None or not 0 <= slot < len(arr):
            return 0j
        return complex(arr[slot])

    def items(self, tol: float = 0.0) -> Iterator[tuple[tuple[Path, int], complex]]:
        for path, arr in self.amplitudes.items():
            for slot in np.nonzero(np.abs(arr) > tol)[0]:
                yield (path, int(slot)), complex(arr[slot])

    def total_probability(self) -> float:
        return float(sum(np.sum(np.abs(a) ** 2) for a in self.amplitudes.values()))

    def paths(self) -> list[Path]:
        return sorted(self.amplitudes)


def encode_state(
    ctx: FieldCtx,
    basis: int | str,
    n: int,
    construction: Construction | str = Construction.WOOTTERS_FIELDS,
) -> TemporalState:
    """Time-bin encoding of basis state ``n``; ``basis`` is ``"Z"``, ``d`` or a phase basis."""
    d = ctx.d
    if not 0 <= n < d:
        raise IndexError(f"state index {n} outside [0, {d - 1}]")
    if basis == "Z" or basis == d:
        amps = np.zeros(d, dtype=complex)
        amps[n] = 1.0
        return TemporalState.from_slots(amps)
    if not isinstance(basis, (int, np.integer)) or not 0 <= basis < d:
        raise IndexError(f"basis {basis!r} is neither 'Z' nor in [0, {d}]")
    return TemporalState.from_slots(build_basis(ctx, int(basis), construction)[:, n])


def apply_phase_mod(state: TemporalState, ctx: FieldCtx, r: int) -> TemporalState:
    """Multiply slot ``m`` by ``conj(D[r][m, m])``; downstream ``B[0]`` then measures basis ``r``."""
    arr = state.amplitudes.get(())
    if arr is None or len(state.amplitudes) != 1 or len(arr) > ctx.d:
        raise LayoutError("phase modulation expects a single input path within slots [0, d)")
    phase = np.conj(np.diag(build_diag(ctx, r)))[: len(arr)]
    return TemporalState({(): arr * phase})


# -- a single interferometer stage


def _stage(
    x: np.ndarray,
    port: int,
    delay: int,
    arms: int,
    route: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Propagate one input signal on ``port`` through a p-arm interferometer.

    ``route`` (active mode) gives the arm for each input slot, ``-1`` where the
    switch schedule expects no light.
    """
    F = build_fourier(arms)
    L = len(x)
    arm_sig = np.zeros((arms, L), dtype=complex)
    if route is None:
        arm_sig[:] = F[:, port : port + 1] * x[None, :]
    else:
        if len(route) < L:
            route = np.concatenate([route, np.full(L - len(route), -1, dtype=route.dtype)])
        live = np.abs(x) > AMP_TOL
        if np.any(live & (route[:L] < 0)):
            raise LayoutError("light arrives in a slot the switch schedule does not route")
        idx = np.nonzero(live)[0]
        arm_sig[route[idx], idx] = x[idx]
    out = np.zeros((arms, L + (arms - 1) * delay), dtype=complex)
    for k in range(arms):
        out[:, k * delay : k * delay + L] += F[:, k : k + 1] * arm_sig[k][None, :]
    return [out[q] for q in range(arms)]


def _default_route(length: int, delay: int, arms: int) -> np.ndarray:
    t = np.arange(length)
    return arms - 1 - (t // delay) % arms


def delay_interferometer_stage(
    state: TemporalState,
    delay: int,
    arms: int = 2,
    switch_mode: SwitchMode | str = SwitchMode.PASSIVE,
) -> TemporalState:
    """One stand-alone interferometer; input paths ``()`` or ``(i,)`` select the port."""
    if delay <= 0:
        raise ValueError("delay must be positive")
    mode = SwitchMode(switch_mode)
    outs = None
    for path, arr in state.amplitudes.items():
        port = path[-1] if path else 0
        route = _default_route(len(arr), delay, arms) if mode is SwitchMode.ACTIVE else None
        res = _stage(arr, port, delay, arms, route)
        if outs is None:
            outs = res
        else:
            n = max(len(outs[0]), len(res[0]))
            outs = [np.pad(a, (0, n - len(a))) + np.pad(b, (0, n - len(b))) for a, b in zip(outs, res)]
    if mode is SwitchMode.ACTIVE and len(state.amplitudes) > 1:
        raise LayoutError("stand-alone active stage accepts a single input port")
    return TemporalState({(q,): outs[q] for q in range(arms)} if outs else {})


# -- networks


@dataclass(frozen=True)
class DetectionMap:
    """Outcome ``n`` is a click at ``outcomes[n] = (path, slot)``."""

    outcomes: tuple[tuple[Path, int], ...]

    def __post_init__(self):
        if len(set(self.outcomes)) != len(self.outcomes):
            raise LayoutError("designated detection slots are not distinct")

    def __len__(self):
        return len(self.outcomes)

    def __getitem__(self, n):
        return self.outcomes[n]


@dataclass(frozen=True)
class NetworkLayout:
    ctx: FieldCtx
    topology: Topology = Topology.TDM
    switch_mode: SwitchMode = SwitchMode.PASSIVE
    inter_stage_delays: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "switch_mode", SwitchMode(self.switch_mode))
        if self.topology is Topology.TDM:
            if not self.inter_stage_delays:
                object.__setattr__(self, "inter_stage_delays", default_inter_stage_delays(self.ctx))
            if len(self.inter_stage_delays) != self.ctx.N - 1:
                raise LayoutError(f"need {self.ctx.N - 1} inter-stage delays")
        elif self.inter_stage_delays:
            raise LayoutError("tree layouts have no inter-stage delays")

    @property
    def arms(self) -> int:
        return self.ctx.p

    @property
    def stage_delays(self) -> tuple[int, ...]:
        p, n = self.ctx.p, self.ctx.N
        return tuple(p ** (n - 1 - k) for k in range(n))

    @property
    def interferometer_count(self) -> int:
        if self.topology is Topology.TDM:
            return self.ctx.N
        return (self.ctx.d - 1) // (self.ctx.p - 1)

    @property
    def detector_count(self) -> int:
        return self.arms if self.topology is Topology.TDM else self.ctx.d

    @property
    def loss_factor(self) -> float:
        """Detection probability on the designated slots for any input state."""
        return 1.0 if self.switch_mode is SwitchMode.ACTIVE else float(self.ctx.d) ** -1

    @property
    def loss_db(self) -> float:
        return float(10 * np.log10(1.0 / self.loss_factor))

    # -- switch schedules

    def _live_route(self, k: int) -> np.ndarray:
        """Arm per relative slot in a branch window at stage ``k`` (``-1``: dark slot)."""
        ctx = self.ctx
        p, n = ctx.p, ctx.N
        dig = ctx.digit_table
        done = dig[:, n - k :] if k else np.zeros((ctx.d, 0), dtype=np.int64)
        live = np.all(done == p - 1, axis=1)
        return np.where(live, p - 1 - dig[:, n - 1 - k], -1)

    @cached_property
    def branch_offsets(self) -> list[dict[int, list[int]]]:
        """Per stage: input port -> time offsets of the branches entering it."""
        out = [{0: [0]}]
        for k in range(self.ctx.N - 1):
            if self.topology is Topology.TREE:
                out.append({0: [0]})
                continue
            all_off = sorted(o for offs in out[-1].values() for o in offs)
            tau = self.inter_stage_delays[k]
            out.append({q: [o + q * tau for o in all_off] for q in range(self.arms)})
        return out

    @cached_property
    def schedules(self) -> list[dict[int, np.ndarray]] | None:
        """Active-switch route per stage and input port, as arrays over absolute slots."""
        if self.switch_mode is SwitchMode.PASSIVE:
            return None
        d = self.ctx.d
        scheds = []
        for k, ports in enumerate(self.branch_offsets):
            rel = self._live_route(k)
            horizon = max(o for offs in ports.values() for o in offs) + d
            per_port = {}
            for port, offs in ports.items():
                route = np.full(horizon, -1, dtype=np.int64)
                for o in offs:
                    window = route[o : o + d]
                    clash = (window >= 0) & (rel >= 0) & (window != rel)
                    if np.any(clash):
                        raise LayoutError(f"stage {k} port {port}: overlapping branches need different routes")
                    route[o : o + d] = np.where(rel >= 0, rel, window)
                per_port[port] = route
            # a switch is a permutation at each instant: live inputs must use distinct arms
            stacked = np.stack([per_port[q] for q in sorted(per_port)])
            for t in range(horizon):
                used = stacked[:, t][stacked[:, t] >= 0]
                if len(set(used.tolist())) != len(used):
                    raise LayoutError(f"stage {k}: switch needs two inputs in one arm at slot {t}")
            scheds.append(per_port)
        return scheds

    # -- propagation

    def propagate_branches(self, state: TemporalState) -> dict[Path, dict[Path, np.ndarray]]:
        """Final path -> {branch history -> slot amplitudes}."""
        arr = state.amplitudes.get(())
        if arr is None or len(state.amplitudes) != 1 or len(arr) > self.ctx.d:
            raise LayoutError("input state must occupy path () within slots [0, d)")
        p = self.arms
        # signals: input port (or tree path) -> {branch -> array}
        signals: dict[Path, dict[Path, np.ndarray]] = {(0,): {(): np.asarray(arr, dtype=complex)}}
        for k, delay in enumerate(self.stage_delays):
            new: dict[Path, dict[Path, np.ndarray]] = defaultdict(dict)
            for path, branches in signals.items():
                port = path[-1] if self.topology is Topology.TDM else 0
                route = self.schedules[k][port] if self.schedules is not None else None
                for hist, x in branches.items():
                    outs = _stage(x, port, delay, p, route)
                    for q in range(p):
                        y = outs[q]
                        if self.topology is Topology.TDM:
                            if k < self.ctx.N - 1 and q:
                                y = np.concatenate([np.zeros(q * self.inter_stage_delays[k], dtype=complex), y])
                            new[(q,)][hist + (q,)] = y
                        else:
                            key = (q,) if k == 0 else path + (q,)
                            new[key][hist + (q,)] = y
            signals = dict(new)
        return signals

    def propagate(self, state: TemporalState) -> TemporalState:
        out = {}
        for path, branches in self.propagate_branches(state).items():
            n = max(len(a) for a in branches.values())
            total = np.zeros(n, dtype=complex)
            for a in branches.values():
                total[: len(a)] += a
            out[path] = total
        return TemporalState(out)

    # -- derived measurement

    @cached_property
    def _transfer(self) -> tuple[list[tuple[Path, int]], np.ndarray]:
        d = self.ctx.d
        cols = []
        for m in range(d):
            e = np.zeros(d, dtype=complex)
            e[m] = 1.0
            cols.append(dict(self.propagate(TemporalState.from_slots(e)).items()))
        keys = sorted(set().union(*cols))
        T = np.array([[c.get(k, 0j) for c in cols] for k in keys], dtype=complex)
        return keys, T

    @cached_property
    def detection_map(self) -> DetectionMap:
        """Locate the full-interference slots and label them by ``B[0]`` outcome."""
        keys, T = self._transfer
        d = self.ctx.d
        mod = np.abs(T)
        full = np.all(mod > AMP_TOL, axis=1) & (np.ptp(mod, axis=1) < 1e-12)
        rows = np.nonzero(full)[0]
        if len(rows) != d:
            raise LayoutError(f"found {len(rows)} full-interference slots, expected {d}")
        B0 = build_wf_basis(self.ctx, 0)
        outcomes: list = [None] * d
        for row in rows:
            ov = np.abs(T[row] @ B0)
            n = int(np.argmax(ov))
            if abs(ov[n] - np.linalg.norm(T[row])) > 1e-10 or outcomes[n] is not None:
                raise LayoutError("designated slot does not project onto a single B[0] state")
            outcomes[n] = keys[row]
        return DetectionMap(tuple(outcomes))

    @cached_property
    def detection_matrix(self) -> np.ndarray:
        """Row ``n``: amplitude at the outcome-``n`` slot per input slot."""
        keys, T = self._transfer
        index = {k: i for i, k in enumerate(keys)}
        return T[[index[k] for k in self.detection_map.outcomes]]

    def detect(self, state: TemporalState) -> np.ndarray:
        """Amplitudes at the designated slots, indexed by outcome."""
        out = self.propagate(state)
        return np.array([out[key] for key in self.detection_map.outcomes])

    def netlist(self) -> dict:
        ifs = []
        for k, delay in enumerate(self.stage_delays):
            copies = 1 if self.topology is Topology.TDM else self.arms**k
            for c in range(copies):
                ifs.append(
                    {"stage": k, "copy": c, "arms": self.arms, "delay": delay, "switch_mode": self.switch_mode.value}
                )
        return {
            "field": self.ctx.to_dict(),
            "topology": self.topology.value,
            "switch_mode": self.switch_mode.value,
            "stages": ifs,
            "interferometer_count": self.interferometer_count,
            "detector_count": self.detector_count,
            "inter_stage_delays": list(self.inter_stage_delays),
            "detection_map": [
                {"outcome": n, "path": list(path), "slot": slot}
                for n, (path, slot) in enumerate(self.detection_map.outcomes)
            ],
            "loss_factor": self.loss_factor,
            "loss_db": self.loss_db,
        }


def default_inter_stage_delays(ctx: FieldCtx) -> tuple[int, ...]:
    """``tau'_k = 2 d p^k``: every branch window (< 2d slots) gets its own time interval."""
    return tuple(2 * ctx.d * ctx.p**k for k in range(ctx.N - 1))


def linear_inter_stage_delays(ctx: FieldCtx) -> tuple[int, ...]:
    """``tau'_k = d (k+1)``.

    Branch windows overlap under passive splitting once N >= 2, and active
    schedules clash from d = 16 (p = 2) and d = 27 (p = 3).
    """
    return tuple(ctx.d * (k + 1) for k in range(ctx.N - 1))


def build_layout(
    ctx: FieldCtx,
    topology: Topology | str = Topology.TDM,
    switch_mode: SwitchMode | str = SwitchMode.PASSIVE,
    inter_stage_delays: Sequence[int] | None = None,
) -> NetworkLayout:
    layout = NetworkLayout(ctx, Topology(topology), SwitchMode(switch_mode), tuple(inter_stage_delays or ()))
    layout.schedules  # noqa: B018 - validate switch schedules eagerly
    return layout


def propagate(layout: NetworkLayout, state: TemporalState) -> dict[tuple[Path, int], complex]:
    return dict(layout.propagate(state).items())


def extract_povm(layout: NetworkLayout) -> np.ndarray:
    """POVM elements ``E[n] = |v_n><v_n|`` on the input slots, shape ``(d, d, d)``."""
    T = layout.detection_matrix
    return np.einsum("na,nb->nab", T.conj(), T)


@dataclass
class DisjointnessReport:
    ok: bool
    designated_found: int
    mixed_slots: list[tuple[Path, int]]


def branch_disjointness(layout: NetworkLayout) -> DisjointnessReport:
    """Check that each designated slot is reached through exactly one branch."""
    d = layout.ctx.d
    contributors: dict[tuple[Path, int], set] = defaultdict(set)
    for m in range(d):
        e = np.zeros(d, dtype=complex)
        e[m] = 1.0
        for path, branches in layout.propagate_branches(TemporalState.from_slots(e)).items():
            for hist, arr in branches.items():
                for slot in np.nonzero(np.abs(arr) > AMP_TOL)[0]:
                    contributors[(path, int(slot))].add(hist)
    try:
        designated = list(layout.detection_map.outcomes)
    except LayoutError:
        # fall back to every slot that every input reaches
        designated = []
    mixed = [key for key in designated if len(contributors[key]) != 1]
    ok = len(designated) == d and not mixed
    return DisjointnessReport(ok, len(designated), mixed)


def measurement_operators(
    ctx: FieldCtx,
    layout: NetworkLayout,
    construction: Construction | str = Construction.WOOTTERS_FIELDS,
) -> list[np.ndarray]:
    """Row ``n`` of entry ``r`` maps an input state to the amplitude of outcome ``n``.

    Phase basis ``r`` is measured by phase modulation then the layout's
    designated slots; entry ``d`` (Z) by arrival time. Rows keep the passive
    loss, so ``1 - sum |M psi|^2`` is the no-detection probability. With
    ``construction="durt"`` bases and outcomes are relabelled through
    :func:`~mubqkd.mub.equivalence_map`.
    """
    d = ctx.d
    T = layout.detection_matrix
    meas = [T * np.conj(np.diag(build_diag(ctx, r)))[None, :] for r in range(d)]
    meas.append(np.eye(d, dtype=complex))
    if Construction(construction) is Construction.DURT:
        # Durt state (r, j) is WF state (basis_perm[r], state_perm[r, j])
        emap = equivalence_map(ctx)
        meas = [meas[int(emap.basis_perm[r])][emap.state_perm[r]] for r in range(d)] + [meas[d]]
    return meas


def conditional_probabilities(
    ctx: FieldCtx,
    layout: NetworkLayout,
    channel=None,
    construction: Construction | str = Construction.WOOTTERS_FIELDS,
) -> np.ndarray:
    """``P[r_a, n_a, r_b, n_b]`` conditioned on detection; basis index ``d`` is Z.

    ``channel`` is ``None`` (identity) or any object with ``kraus(ctx)``
    returning Kraus operators.
    """
    d = ctx.d
    kraus = [np.eye(d)] if channel is None else list(channel.kraus(ctx))
    meas = measurement_operators(ctx, layout, construction)
    P = np.zeros((d + 1, d, d + 1, d))
    for ra in range(d + 1):
        prep = build_basis(ctx, ra, construction)
        for K in kraus:
            out = K @ prep
            for rb in range(d + 1):
                P[ra, :, rb, :] += (np.abs(meas[rb] @ out) ** 2).T
    P /= P.sum(axis=3, keepdims=True)
    return P
