"""Mutually unbiased bases over GF(p^N), their Weyl operators and Bell states.

Two labellings of the same family are provided:

* ``"wf"``: phases ``i^(sum_j r_j m.A_j.m + 2 m.n)`` (p = 2) or
  ``w_p^(sum_j r_j m.A_j.m + m.n)`` (odd p), so ``B[r] = D[r] @ B[0]``.
* ``"durt"``: ``H[r][i, j] = conj(alpha(r, -i)) * gamma^(-i*j) / sqrt(d)``, the
  labelling in which the Galois-field Weyl operators act as simple shifts.

Bases are d x d matrices whose columns are the basis states; index ``d`` of a
family is the Z (computational) basis. Raising ``gamma`` to a field element
``x`` means ``gamma ** digit0(x)``, an additive character of the field.
Entries are built from integer phase exponents and a fixed table of roots of
unity, so constructive identities hold bit-for-bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .galois import FieldCtx, StructureMatrices, structure_matrices

UNITARY_TOL = 1e-10
EXACT_TOL = 1e-12


class Construction(str, enum.Enum):
    WOOTTERS_FIELDS = "wf"
    DURT = "durt"


class BasisIndexError(IndexError):
    pass


class PhaseAlphabetError(ValueError):
    pass


def _phase_order(ctx: FieldCtx) -> int:
    return 4 if ctx.p == 2 else ctx.p


@lru_cache(maxsize=None)
def _roots(order: int) -> np.ndarray:
    if order == 4:
        return np.array([1, 1j, -1, -1j], dtype=complex)
    if order == 2:
        return np.array([1, -1], dtype=complex)
    return np.exp(2j * np.pi * np.arange(order) / order)


def _from_exponents(ctx: FieldCtx, expo: np.ndarray, order: int | None = None) -> np.ndarray:
    order = order or _phase_order(ctx)
    return _roots(order)[np.asarray(expo) % order]


def gamma_exponent(ctx: FieldCtx, x):
    """Exponent of ``gamma`` in ``gamma^x`` (digit 0 of ``x``), as an array."""
    return ctx.digit_table[np.asarray(x), 0]


def _check_r(ctx: FieldCtx, r: int):
    if not 0 <= r < ctx.d:
        raise BasisIndexError(f"basis index r={r} outside [0, {ctx.d - 1}]")


# -- Wootters-Fields form


def _wf_diag_exponent(ctx: FieldCtx, r: int) -> np.ndarray:
    A: StructureMatrices = structure_matrices(ctx)
    rv = ctx.digit_table[r]
    return rv @ A.quadratic_forms  # sum_j r_j m^T A_j m, per m


def build_diag(ctx: FieldCtx, r: int) -> np.ndarray:
    """Diagonal unitary ``D[r]`` with ``B[r] = D[r] @ B[0]``."""
    _check_r(ctx, r)
    return np.diag(_from_exponents(ctx, _wf_diag_exponent(ctx, r)))


def build_wf_basis(ctx: FieldCtx, r: int) -> np.ndarray:
    _check_r(ctx, r)
    dig = ctx.digit_table
    dot = dig @ dig.T  # m . n over the integers
    scale = 2 if ctx.p == 2 else 1
    expo = _wf_diag_exponent(ctx, r)[:, None] + scale * dot
    return _from_exponents(ctx, expo) / np.sqrt(ctx.d)


def build_fourier(d: int) -> np.ndarray:
    if d < 2:
        raise ValueError("d must be >= 2")
    m = np.arange(d)
    return _roots(d)[np.outer(m, m) % d] / np.sqrt(d)


def tensor_power_reference(ctx: FieldCtx) -> np.ndarray:
    """N-fold Kronecker power of the p-point DFT, ordered so digit 0 is fastest."""
    f = build_fourier(ctx.p)
    out = np.ones((1, 1), dtype=complex)
    for _ in range(ctx.N):
        out = np.kron(f, out)
    return out


# -- Durt form


def _durt_alpha_exponent(ctx: FieldCtx, r: int, i) -> np.ndarray:
    """Exponent of ``alpha_i^r`` in units of ``2*pi/order``."""
    i = np.asarray(i)
    if ctx.p == 2:
        # alpha_i^r = prod_{m,n} i^(r (i_m 2^m)(i_n 2^n)); i^x uses the integer label mod 4
        dig = ctx.digit_table[i]
        total = np.zeros(i.shape, dtype=np.int64)
        for m in range(ctx.N):
            rm = ctx.mul(r, dig[..., m] * 2**m)
            for n in range(ctx.N):
                total += ctx.mul(rm, dig[..., n] * 2**n)
        return total % 4
    # alpha_i^r = gamma^(-(r i i) / 2)
    x = ctx.div(ctx.mul(ctx.mul(r, i), i), 2 % ctx.p)
    return gamma_exponent(ctx, ctx.neg(x))


def durt_alpha(ctx: FieldCtx, r: int, i) -> np.ndarray:
    return _from_exponents(ctx, _durt_alpha_exponent(ctx, r, i))


def _gamma_scale(ctx: FieldCtx) -> int:
    # gamma = -1 = i^2 for p = 2
    return 2 if ctx.p == 2 else 1


def build_durt_basis(ctx: FieldCtx, r: int) -> np.ndarray:
    _check_r(ctx, r)
    el = ctx.elements
    neg_i = ctx.neg(el)
    alpha_conj = -_durt_alpha_exponent(ctx, r, neg_i)
    gij = gamma_exponent(ctx, ctx.mul(neg_i[:, None], el[None, :]))
    expo = alpha_conj[:, None] + _gamma_scale(ctx) * gij
    return _from_exponents(ctx, expo) / np.sqrt(ctx.d)


def build_basis(ctx: FieldCtx, r: int, construction: Construction | str = Construction.WOOTTERS_FIELDS):
    """Basis ``r`` of the family; ``r == d`` is the Z basis."""
    if r == ctx.d:
        return np.eye(ctx.d, dtype=complex)
    if Construction(construction) is Construction.DURT:
        return build_durt_basis(ctx, r)
    return build_wf_basis(ctx, r)


@dataclass
class MubFamily:
    ctx: FieldCtx
    bases: list[np.ndarray]
    construction: Construction = Construction.WOOTTERS_FIELDS

    @property
    def d(self) -> int:
        return self.ctx.d

    @property
    def z_basis(self) -> np.ndarray:
        return self.bases[self.ctx.d]

    def __len__(self):
        return len(self.bases)

    def __getitem__(self, r):
        return self.bases[r]


def build_family(ctx: FieldCtx, construction: Construction | str = Construction.WOOTTERS_FIELDS) -> MubFamily:
    construction = Construction(construction)
    bases = [build_basis(ctx, r, construction) for r in range(ctx.d + 1)]
    return MubFamily(ctx, bases, construction)


def phase_alphabet(M: np.ndarray, tol: float = 1e-9) -> list[float]:
    """Distinct phases in [0, 2pi) of a matrix with equal-modulus nonzero entries."""
    M = np.asarray(M)
    mod = np.abs(M)
    if np.any(mod < tol):
        raise PhaseAlphabetError("matrix has zero entries")
    if np.ptp(mod) > tol * mod.max() * 10:
        raise PhaseAlphabetError("entries do not have equal modulus")
    phases = np.sort(np.mod(np.angle(M).ravel(), 2 * np.pi))
    out: list[float] = []
    for ph in phases:
        if not out or ph - out[-1] > tol:
            out.append(float(ph))
    # wrap-around: a phase just below 2pi coincides with 0
    if len(out) > 1 and out[0] + 2 * np.pi - out[-1] <= tol:
        out.pop()
    return out


@dataclass
class MubReport:
    ok: bool
    worst_pair_deviation: float
    worst_pair: tuple[int, int] | None
    unitarity_deviation: float
    worst_unitary: int | None
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "worst_pair_deviation": self.worst_pair_deviation,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "unitarity_deviation": self.unitarity_deviation,
            "worst_unitary": self.worst_unitary,
            "failures": self.failures,
        }


def verify_mub(family: MubFamily | list[np.ndarray], tol: float = UNITARY_TOL) -> MubReport:
    bases = family.bases if isinstance(family, MubFamily) else list(family)
    d = bases[0].shape[0]
    eye = np.eye(d)
    unit_dev, worst_u = 0.0, None
    failures = []
    for r, b in enumerate(bases):
        dev = float(np.abs(b.conj().T @ b - eye).max())
        if dev > unit_dev:
            unit_dev, worst_u = dev, r
        if dev > tol:
            failures.append(f"basis {r} not unitary (dev {dev:.3e})")
    pair_dev, worst_pair = 0.0, None
    for r in range(len(bases)):
        for s in range(r + 1, len(bases)):
            overlap = np.abs(bases[r].conj().T @ bases[s]) ** 2
            dev = float(np.abs(overlap - 1.0 / d).max())
            if worst_pair is None or dev > pair_dev:
                pair_dev, worst_pair = dev, (r, s)
            if dev > tol:
                failures.append(f"bases ({r}, {s}) not unbiased (dev {dev:.3e})")
    return MubReport(not failures, pair_dev, worst_pair, unit_dev, worst_u, failures)


# -- equivalence between the two labellings


@dataclass(frozen=True)
class EquivalenceMap:
    """``H[r][i, j] == B[basis_perm[r]][i, state_perm[r, j]]``."""

    ctx: FieldCtx
    basis_perm: np.ndarray  # (d,)
    state_perm: np.ndarray  # (d, d)
    a: np.ndarray | None = None  # (d, N) correction vectors, p = 2 only
    b: np.ndarray | None = None

    def inverse_state_perm(self) -> np.ndarray:
        inv = np.empty_like(self.state_perm)
        rows = np.arange(self.state_perm.shape[0])[:, None]
        inv[rows, self.state_perm] = np.arange(self.state_perm.shape[1])[None, :]
        return inv


def equivalence_map(ctx: FieldCtx) -> EquivalenceMap:
    """Permutations taking the Durt labelling to the Wootters-Fields one."""
    A = structure_matrices(ctx)
    d, n, p = ctx.d, ctx.N, ctx.p
    el = ctx.elements
    if p == 2:
        basis_perm = A.apply(0, el)
        a1 = A[1] if n > 1 else np.zeros((n, n), dtype=np.int64)
        diag = np.stack([np.diag(A[l]) for l in range(n)])  # diag[l, n] = A_l[n, n]
        r_dig = ctx.digit_table
        # a_n = sum_{k,l} r_k A1[k,l] A_l[n,n] mod 2
        a = (r_dig @ a1 @ diag) % 2
        # b_n from sum_k r'_k A_k[n,n] mod 4
        s = (ctx.digit_table[basis_perm] @ diag) % 4
        b = ((s == 1) | (s == 2)).astype(np.int64)
        f0j = A.apply(0, el)
        corr = ctx.from_digits((a + b) % 2)
        state_perm = ctx.add(f0j[None, :], corr[:, None])
        return EquivalenceMap(ctx, np.asarray(basis_perm), np.asarray(state_perm), a, b)
    basis_perm = A.apply(0, ctx.div(el, 2 % p))
    row = A.apply(0, ctx.neg(el))
    state_perm = np.tile(row, (d, 1))
    return EquivalenceMap(ctx, np.asarray(basis_perm), state_perm)


def equivalence_deviation(ctx: FieldCtx, emap: EquivalenceMap | None = None) -> float:
    emap = emap or equivalence_map(ctx)
    worst = 0.0
    for r in range(ctx.d):
        H = build_durt_basis(ctx, r)
        B = build_wf_basis(ctx, int(emap.basis_perm[r]))
        worst = max(worst, float(np.abs(H - B[:, emap.state_perm[r]]).max()))
    return worst


# -- Galois-field Weyl operators and generalised Bell states


def weyl(ctx: FieldCtx, i: int, j: int) -> np.ndarray:
    """``V_ij = sum_k gamma^((k+i) j) |k+i><k|``."""
    el = ctx.elements
    rows = ctx.add(el, i)
    phase = _from_exponents(ctx, gamma_exponent(ctx, ctx.mul(rows, j)), ctx.p)
    V = np.zeros((ctx.d, ctx.d), dtype=complex)
    V[rows, el] = phase
    return V


def gamma_power(ctx: FieldCtx, x) -> np.ndarray:
    return _from_exponents(ctx, gamma_exponent(ctx, x), ctx.p)


@dataclass
class WeylReport:
    ok: bool
    eigenstate_deviation: float
    phase_shift_deviation: float
    z_shift_deviation: float
    decomposition_deviation: float


def weyl_shift_laws_check(ctx: FieldCtx, tol: float = UNITARY_TOL) -> WeylReport:
    """Check the shift laws of ``V_ij`` on the Durt bases and the Z basis."""
    d = ctx.d
    el = ctx.elements
    H = [build_durt_basis(ctx, r) for r in range(d)]
    V = [[weyl(ctx, i, j) for j in range(d)] for i in range(d)]
    eig = ph = zs = dec = 0.0
    for i in range(d):
        for j in range(d):
            Vij = V[i][j]
            dec = max(dec, float(np.abs(Vij - V[0][j] @ V[i][0]).max()))
            # Z basis: V_ij |k> = gamma^((k+i) j) |i+k>
            target = np.zeros((d, d), dtype=complex)
            target[ctx.add(i, el), el] = gamma_power(ctx, ctx.mul(ctx.add(el, i), j))
            zs = max(zs, float(np.abs(Vij - target).max()))
            for r in range(d):
                lhs = Vij @ H[r]
                idx = ctx.add(ctx.sub(ctx.mul(r, i), j), el)
                coef = gamma_power(ctx, ctx.mul(i, el)) * np.conj(durt_alpha(ctx, r, i))
                ph = max(ph, float(np.abs(lhs - H[r][:, idx] * coef[None, :]).max()))
    for r in range(d):
        for l in range(d):
            Vl = V[l][ctx.mul(r, l)]
            out = Vl @ H[r]
            # eigenvalue = <e_k| V |e_k>
            lam = np.einsum("ik,ik->k", H[r].conj(), out)
            eig = max(eig, float(np.abs(out - H[r] * lam[None, :]).max()))
    ok = max(eig, ph, zs, dec) <= tol
    return WeylReport(ok, eig, ph, zs, dec)


def bell_state(ctx: FieldCtx, i: int, j: int) -> np.ndarray:
    """``|Phi_ij> = (V_ij x I)|Phi_00>``, index ``a*d + b`` for ``|a>|b>``."""
    return weyl(ctx, i, j).reshape(-1) / np.sqrt(ctx.d)


def bell_basis(ctx: FieldCtx) -> np.ndarray:
    """Columns are ``|Phi_ij>`` at column ``i*d + j``."""
    d = ctx.d
    return np.stack([bell_state(ctx, i, j) for i in range(d) for j in range(d)], axis=1)
