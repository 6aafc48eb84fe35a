"""Arithmetic in GF(p^N).

Elements are identified with integer labels ``e = sum(e_n * p**n)``; digit ``n``
is the coefficient of ``x**n`` in the polynomial representation (little-endian).
The modulus is the smallest monic irreducible polynomial of degree N over GF(p)
when ordered by the same integer labelling (leading coefficient included).

All ``FieldCtx`` operations accept Python ints or integer numpy arrays and
broadcast like numpy ufuncs.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

MAX_ORDER = 2**16


class FieldError(ValueError):
    """Invalid field parameters or element values."""


class FieldContextError(FieldError):
    """Operands belong to different fields."""


class FieldZeroDivisionError(ZeroDivisionError):
    """Division by the zero element."""


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    k = 3
    while k * k <= n:
        if n % k == 0:
            return False
        k += 2
    return True


def prime_power(d: int) -> tuple[int, int]:
    """Return ``(p, N)`` with ``d == p**N``; raise FieldError otherwise."""
    if d < 2:
        raise FieldError(f"d={d} is not a prime power")
    for p in range(2, d + 1):
        if d % p == 0:
            break
    n, rest = 0, d
    while rest % p == 0:
        rest //= p
        n += 1
    if rest != 1:
        raise FieldError(f"d={d} is not a prime power")
    return p, n


def _prime_factors(n: int) -> list[int]:
    out, k = [], 2
    while k * k <= n:
        if n % k == 0:
            out.append(k)
            while n % k == 0:
                n //= k
        k += 1
    if n > 1:
        out.append(n)
    return out


# -- polynomials over GF(p): little-endian lists, no trailing-zero normalisation needed


def _poly_rem(a: Sequence[int], m: Sequence[int], p: int) -> list[int]:
    """Remainder of ``a`` modulo monic ``m``."""
    a = [c % p for c in a]
    dm = len(m) - 1
    for k in range(len(a) - 1, dm - 1, -1):
        c = a[k]
        if c:
            for t in range(dm + 1):
                a[k - dm + t] = (a[k - dm + t] - c * m[t]) % p
    return a[:dm]


def _monic_polys(p: int, degree: int):
    for code in range(p**degree):
        yield [(code // p**i) % p for i in range(degree)] + [1]


def is_irreducible(modulus: Sequence[int], p: int) -> bool:
    """Trial division by every monic polynomial of degree <= N/2."""
    n = len(modulus) - 1
    if n < 1 or modulus[-1] % p != 1:
        return False
    for deg in range(1, n // 2 + 1):
        for f in _monic_polys(p, deg):
            if not any(_poly_rem(modulus, f, p)):
                return False
    return True


@functools.lru_cache(maxsize=None)
def smallest_irreducible(p: int, n: int) -> tuple[int, ...]:
    for m in _monic_polys(p, n):
        if is_irreducible(m, p):
            return tuple(m)
    raise FieldError(f"no irreducible polynomial of degree {n} over GF({p})")  # pragma: no cover


@dataclass(frozen=True)
class FieldCtx:
    """The field GF(p^N) with a fixed irreducible modulus.

    Use :func:`field` to obtain a cached instance with the default modulus.
    """

    p: int
    N: int
    modulus: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not is_prime(self.p):
            raise FieldError(f"p={self.p} is not prime")
        if self.N < 1:
            raise FieldError(f"extension degree N={self.N} must be >= 1")
        if self.p**self.N > MAX_ORDER:
            raise FieldError(f"field order {self.p}^{self.N} exceeds {MAX_ORDER}")
        if not self.modulus:
            object.__setattr__(self, "modulus", smallest_irreducible(self.p, self.N))
        else:
            mod = tuple(int(c) % self.p for c in self.modulus)
            if len(mod) != self.N + 1 or not is_irreducible(mod, self.p):
                raise FieldError(f"modulus {self.modulus} is not monic irreducible of degree {self.N}")
            object.__setattr__(self, "modulus", mod)

    @property
    def d(self) -> int:
        return self.p**self.N

    def __repr__(self):
        return f"FieldCtx(p={self.p}, N={self.N}, modulus={list(self.modulus)})"

    # -- serialisation

    def to_dict(self) -> dict:
        return {"p": self.p, "N": self.N, "modulus": list(self.modulus)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "FieldCtx":
        return cls(int(data["p"]), int(data["N"]), tuple(data.get("modulus") or ()))

    # -- tables

    @cached_property
    def powers(self) -> np.ndarray:
        return self.p ** np.arange(self.N, dtype=np.int64)

    @cached_property
    def digit_table(self) -> np.ndarray:
        """``digit_table[e, n]`` is digit ``n`` of element ``e``."""
        e = np.arange(self.d, dtype=np.int64)[:, None]
        return (e // self.powers[None, :]) % self.p

    def digits(self, e):
        return self.digit_table[np.asarray(e)]

    def from_digits(self, digits) -> np.ndarray:
        return (np.asarray(digits, dtype=np.int64) % self.p) @ self.powers

    def _mulmod_digits(self, a: Sequence[int], b: Sequence[int]) -> list[int]:
        prod = [0] * (2 * self.N - 1)
        for i, ai in enumerate(a):
            if ai:
                for j, bj in enumerate(b):
                    prod[i + j] = (prod[i + j] + ai * bj) % self.p
        return _poly_rem(prod, self.modulus, self.p) if self.N > 1 else prod

    def _label(self, digits: Sequence[int]) -> int:
        return int(sum(int(c) * self.p**i for i, c in enumerate(digits)))

    def _slow_mul(self, a: int, b: int) -> int:
        return self._label(self._mulmod_digits(self.digit_table[a], self.digit_table[b]))

    def _slow_pow(self, a: int, k: int) -> int:
        result, base = 1, a
        while k:
            if k & 1:
                result = self._slow_mul(result, base)
            base = self._slow_mul(base, base)
            k >>= 1
        return result

    @cached_property
    def primitive_element(self) -> int:
        if self.d == 2:
            return 1
        factors = _prime_factors(self.d - 1)
        for g in range(2, self.d):
            if all(self._slow_pow(g, (self.d - 1) // q) != 1 for q in factors):
                return g
        raise FieldError("no primitive element found")  # pragma: no cover

    @cached_property
    def _exp_log(self) -> tuple[np.ndarray, np.ndarray]:
        p, n, d = self.p, self.N, self.d
        g = self.primitive_element
        # multiplication-by-g as an N x N matrix over GF(p); powers built by doubling
        mg = np.array(
            [self._mulmod_digits(self.digit_table[g], self.digit_table[p**k]) for k in range(n)],
            dtype=np.int64,
        ).T
        vecs = np.zeros((n, 1), dtype=np.int64)
        vecs[0, 0] = 1
        step = mg.copy()
        while vecs.shape[1] < d - 1:
            vecs = np.concatenate([vecs, (step @ vecs) % p], axis=1)
            step = (step @ step) % p
        exp = (self.powers @ vecs[:, : d - 1]).astype(np.int64)
        if len(np.unique(exp)) != d - 1:  # pragma: no cover
            raise FieldError("exp table is not a permutation; modulus or generator invalid")
        log = np.zeros(d, dtype=np.int64)
        log[exp] = np.arange(d - 1)
        return exp, log

    # -- vectorised arithmetic on integer labels

    @staticmethod
    def _ret(x, *args):
        if all(np.ndim(a) == 0 for a in args):
            return int(x)
        return x

    def _check(self, *args):
        for a in args:
            arr = np.asarray(a)
            if arr.size and (arr.min() < 0 or arr.max() >= self.d):
                raise FieldError(f"element out of range [0, {self.d - 1}]")

    def add(self, a, b):
        self._check(a, b)
        if self.p == 2:
            out = np.bitwise_xor(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        else:
            out = ((self.digits(a) + self.digits(b)) % self.p) @ self.powers
        return self._ret(out, a, b)

    def neg(self, a):
        self._check(a)
        if self.p == 2:
            out = np.asarray(a, dtype=np.int64)
        else:
            out = ((-self.digits(a)) % self.p) @ self.powers
        return self._ret(out, a)

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def mul(self, a, b):
        self._check(a, b)
        a_, b_ = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
        if self.d == 2:
            return self._ret(a_ & b_, a, b)
        exp, log = self._exp_log
        out = exp[(log[a_] + log[b_]) % (self.d - 1)]
        out = np.where((a_ == 0) | (b_ == 0), 0, out)
        return self._ret(out, a, b)

    def inv(self, a):
        self._check(a)
        a_ = np.asarray(a, dtype=np.int64)
        if np.any(a_ == 0):
            raise FieldZeroDivisionError("inverse of the zero element")
        if self.d == 2:
            return self._ret(a_, a)
        exp, log = self._exp_log
        return self._ret(exp[(-log[a_]) % (self.d - 1)], a)

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def pow(self, a, k: int):
        result = 1
        for _ in range(k):
            result = self.mul(result, a)
        return result

    def element(self, value) -> "GfElement":
        if isinstance(value, (list, tuple, np.ndarray)):
            value = int(self.from_digits(value))
        return GfElement(self, int(value))

    @cached_property
    def elements(self) -> np.ndarray:
        return np.arange(self.d, dtype=np.int64)


@functools.lru_cache(maxsize=None)
def field(p: int, N: int = 1) -> FieldCtx:
    """Cached field with the default (smallest irreducible) modulus."""
    return FieldCtx(p, N)


@dataclass(frozen=True)
class GfElement:
    ctx: FieldCtx
    value: int

    def __post_init__(self):
        if not 0 <= self.value < self.ctx.d:
            raise FieldError(f"label {self.value} outside [0, {self.ctx.d - 1}]")

    @property
    def digits(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.ctx.digit_table[self.value])

    def _other(self, other) -> int:
        if isinstance(other, GfElement):
            if other.ctx != self.ctx:
                raise FieldContextError(f"{self.ctx!r} vs {other.ctx!r}")
            return other.value
        if isinstance(other, (int, np.integer)):
            return int(other)
        return NotImplemented

    def _wrap(self, fn, other):
        o = self._other(other)
        if o is NotImplemented:
            return NotImplemented
        return GfElement(self.ctx, fn(self.value, o))

    def __add__(self, other):
        return self._wrap(self.ctx.add, other)

    def __sub__(self, other):
        return self._wrap(self.ctx.sub, other)

    def __mul__(self, other):
        return self._wrap(self.ctx.mul, other)

    def __truediv__(self, other):
        return self._wrap(self.ctx.div, other)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return GfElement(self.ctx, self.ctx.neg(self.value))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"GF({self.ctx.p}^{self.ctx.N})[{self.value}]"


def add(a: GfElement, b: GfElement) -> GfElement:
    return a + b


def sub(a: GfElement, b: GfElement) -> GfElement:
    return a - b


def mul(a: GfElement, b: GfElement) -> GfElement:
    return a * b


def div(a: GfElement, b: GfElement) -> GfElement:
    return a / b


@dataclass(frozen=True)
class StructureMatrices:
    """Symmetric matrices ``A[k]`` with ``p^m * p^n = sum_k A[k][m, n] p^k``."""

    ctx: FieldCtx
    A: np.ndarray  # shape (N, N, N), A[k, m, n]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.A[k]

    def __len__(self):
        return self.A.shape[0]

    def apply(self, k: int, r):
        """``f_k(r) = A[k] r mod p`` on integer labels."""
        ctx = self.ctx
        vec = ctx.digits(r) @ self.A[k].T % ctx.p
        return ctx._ret(vec @ ctx.powers, r)

    @cached_property
    def quadratic_forms(self) -> np.ndarray:
        """``Q[k, m] = m^T A[k] m`` as unreduced integers."""
        dig = self.ctx.digit_table
        return np.einsum("mi,kij,mj->km", dig, self.A, dig)


@functools.lru_cache(maxsize=None)
def structure_matrices(ctx: FieldCtx) -> StructureMatrices:
    n = ctx.N
    A = np.zeros((n, n, n), dtype=np.int64)
    for m in range(n):
        for k in range(n):
            A[:, m, k] = ctx.digit_table[ctx.mul(ctx.p**m, ctx.p**k)]
    A.setflags(write=False)
    return StructureMatrices(ctx, A)
