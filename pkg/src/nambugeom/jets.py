"""Truncated multivariate Taylor jets (forward mode, derivative order <= 3).

A :class:`Jet` stores the raw partial derivatives ``d^alpha f`` (not divided
by ``alpha!``) of a function of ``n_vars`` variables at a single point, for
every multi-index ``alpha`` with ``|alpha| <= order``.  Jets may carry leading
batch axes, so one ``Jet`` can hold e.g. all ``m`` embedding coordinates, or an
``m x m`` matrix of metric components; arithmetic broadcasts over those axes.

The coefficient axis is always last and ordered by degree (graded), so the
basis of order ``k - 1`` is a prefix of the basis of order ``k`` and
truncation is a slice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_ORDER = 3


class JetError(ValueError):
    """Shape, order or domain violation in jet arithmetic."""


@dataclass(frozen=True, order=True)
class DerivIndex:
    """Exponent vector of a mixed partial derivative."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        if any(e < 0 for e in self.exponents):
            raise JetError(f"negative exponent in {self.exponents}")

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @classmethod
    def of(cls, n_vars: int, *axes: int) -> "DerivIndex":
        """Index for d/du^{axes[0]} d/du^{axes[1]} ... (0-based axes)."""
        e = [0] * n_vars
        for a in axes:
            if not 0 <= a < n_vars:
                raise JetError(f"axis {a} out of range for {n_vars} variables")
            e[a] += 1
        return cls(tuple(e))


class _Basis:
    """Enumeration of multi-indices and the Leibniz tables for (n_vars, order)."""

    def __init__(self, n_vars: int, order: int):
        self.n_vars = n_vars
        self.order = order
        exps = [e for e in product(range(order + 1), repeat=n_vars) if sum(e) <= order]
        exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
        self.exps: list[tuple[int, ...]] = exps
        self.index = {e: i for i, e in enumerate(exps)}
        self.size = len(exps)
        self.degrees = np.array([sum(e) for e in exps])
        self.factorials = np.array([math.prod(math.factorial(x) for x in e) for e in exps], float)

        # Leibniz: d^g(fg) = sum_{a+b=g} binom(g, a) d^a f d^b g
        gi, ai, bi, w = [], [], [], []
        for g, eg in enumerate(exps):
            for ea in product(*(range(x + 1) for x in eg)):
                eb = tuple(x - y for x, y in zip(eg, ea))
                gi.append(g)
                ai.append(self.index[ea])
                bi.append(self.index[eb])
                w.append(math.prod(math.comb(x, y) for x, y in zip(eg, ea)))
        self.mul_a = np.array(ai)
        self.mul_b = np.array(bi)
        self.mul_w = np.array(w, float)
        # starts of each output block for np.add.reduceat (gi is sorted)
        gi = np.array(gi)
        self.mul_starts = np.flatnonzero(np.r_[True, gi[1:] != gi[:-1]])

        # d/du^a maps order-(k-1) index beta to order-k index beta + e_a
        self.shift = []
        if order >= 1:
            lower = basis(n_vars, order - 1)
            for a in range(n_vars):
                idx = []
                for e in lower.exps:
                    f = list(e)
                    f[a] += 1
                    idx.append(self.index[tuple(f)])
                self.shift.append(np.array(idx))


@lru_cache(maxsize=None)
def basis(n_vars: int, order: int) -> _Basis:
    if n_vars < 1:
        raise JetError("n_vars must be >= 1")
    if not 0 <= order <= MAX_ORDER:
        raise JetError(f"order must be in 0..{MAX_ORDER}, got {order}")
    return _Basis(n_vars, order)


class Jet:
    """Batched jet: coefficient array of shape ``batch + (ncoef,)``."""

    __slots__ = ("n_vars", "order", "c")
    __array_priority__ = 1000

    def __init__(self, n_vars: int, order: int, c):
        b = basis(n_vars, order)
        c = np.asarray(c, dtype=float)
        if c.ndim == 0 or c.shape[-1] != b.size:
            raise JetError(f"expected {b.size} coefficients, got shape {c.shape}")
        self.n_vars = n_vars
        self.order = order
        self.c = c

    # -- construction ------------------------------------------------------
    @classmethod
    def constant(cls, value, n_vars: int, order: int) -> "Jet":
        value = np.asarray(value, float)
        c = np.zeros(value.shape + (basis(n_vars, order).size,))
        c[..., 0] = value
        return cls(n_vars, order, c)

    @classmethod
    def variable(cls, index: int, base_value: float, n_vars: int, order: int) -> "Jet":
        if not 0 <= index < n_vars:
            raise JetError(f"variable index {index} out of range for {n_vars} variables")
        j = cls.constant(base_value, n_vars, order)
        if order >= 1:
            j.c[basis(n_vars, order).index[DerivIndex.of(n_vars, index).exponents]] = 1.0
        return j

    @classmethod
    def stack(cls, jets: Sequence["Jet"], axis: int = 0) -> "Jet":
        j0 = jets[0]
        for j in jets[1:]:
            j0._check(j)
        axis = axis if axis >= 0 else axis - 1
        return cls(j0.n_vars, j0.order, np.stack([j.c for j in jets], axis=axis))

    # -- basic accessors ---------------------------------------------------
    @property
    def basis(self) -> _Basis:
        return basis(self.n_vars, self.order)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    @property
    def value(self):
        v = self.c[..., 0]
        return float(v) if v.ndim == 0 else v

    @property
    def coeffs(self) -> dict[DerivIndex, float]:
        if self.shape:
            raise JetError("coeffs mapping is only defined for scalar jets")
        return {DerivIndex(e): float(x) for e, x in zip(self.basis.exps, self.c)}

    def partial(self, idx: DerivIndex | Sequence[int]):
        exps = idx.exponents if isinstance(idx, DerivIndex) else tuple(idx)
        if len(exps) != self.n_vars:
            raise JetError(f"index {exps} has wrong length for {self.n_vars} variables")
        if sum(exps) > self.order:
            raise JetError(f"derivative degree {sum(exps)} exceeds jet order {self.order}")
        v = self.c[..., self.basis.index[exps]]
        return float(v) if v.ndim == 0 else v

    def grad(self) -> np.ndarray:
        """First partials, shape ``batch + (n_vars,)``."""
        if self.order < 1:
            raise JetError("gradient needs order >= 1")
        return self.c[..., 1:1 + self.n_vars].copy()

    def hessian(self) -> np.ndarray:
        """Second partials, shape ``batch + (n_vars, n_vars)``."""
        if self.order < 2:
            raise JetError("hessian needs order >= 2")
        n = self.n_vars
        out = np.empty(self.shape + (n, n))
        for a in range(n):
            for b in range(n):
                out[..., a, b] = self.c[..., self.basis.index[DerivIndex.of(n, a, b).exponents]]
        return out

    def component(self, k: int) -> "Jet":
        """Index the last batch axis."""
        if not self.shape:
            raise JetError("scalar jet has no batch axis")
        return Jet(self.n_vars, self.order, self.c[..., k, :])

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key) or len(key) > len(self.shape):
            raise JetError("jet indexing addresses batch axes only")
        return Jet(self.n_vars, self.order, self.c[key])

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self):
        return f"Jet(n_vars={self.n_vars}, order={self.order}, shape={self.shape}, value={self.value!r})"

    # -- shape manipulation ------------------------------------------------
    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.n_vars, self.order, self.c.reshape(tuple(shape) + (self.c.shape[-1],)))

    def moveaxis(self, src: int, dst: int) -> "Jet":
        nb = len(self.shape)
        src, dst = src % nb, dst % nb
        return Jet(self.n_vars, self.order, np.moveaxis(self.c, src, dst))

    def expand(self, axis: int) -> "Jet":
        nb = len(self.shape)
        axis = axis if axis >= 0 else nb + 1 + axis
        return Jet(self.n_vars, self.order, np.expand_dims(self.c, axis))

    def sum(self, axis=None) -> "Jet":
        nb = len(self.shape)
        if axis is None:
            axis = tuple(range(nb))
        elif isinstance(axis, int):
            axis = (axis % nb,)
        else:
            axis = tuple(a % nb for a in axis)
        return Jet(self.n_vars, self.order, self.c.sum(axis=axis))

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.n_vars, order, self.c[..., :basis(self.n_vars, order).size])

    def diff(self, axis: int) -> "Jet":
        """d/du^axis as a jet one order lower."""
        if self.order < 1:
            raise JetError("cannot differentiate an order-0 jet")
        if not 0 <= axis < self.n_vars:
            raise JetError(f"axis {axis} out of range")
        return Jet(self.n_vars, self.order - 1, self.c[..., self.basis.shift[axis]])

    def gradient_jets(self) -> "Jet":
        """All first partials as jets of order - 1, new trailing batch axis of length n_vars."""
        if self.order < 1:
            raise JetError("cannot differentiate an order-0 jet")
        b = self.basis
        return Jet(self.n_vars, self.order - 1,
                   np.stack([self.c[..., b.shift[a]] for a in range(self.n_vars)], axis=-2))

    # -- arithmetic --------------------------------------------------------
    def _check(self, other: "Jet"):
        if self.n_vars != other.n_vars or self.order != other.order:
            raise JetError(
                f"incompatible jets: ({self.n_vars} vars, order {self.order}) vs "
                f"({other.n_vars} vars, order {other.order})")

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            return other
        return Jet.constant(other, self.n_vars, self.order)

    def __add__(self, other):
        o = self._coerce(other)
        return Jet(self.n_vars, self.order, self.c + o.c)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Jet(self.n_vars, self.order, self.c - o.c)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return Jet(self.n_vars, self.order, -self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, float)
            return Jet(self.n_vars, self.order, self.c * other[..., None])
        self._check(other)
        b = self.basis
        terms = self.c[..., b.mul_a] * other.c[..., b.mul_b] * b.mul_w
        return Jet(self.n_vars, self.order, np.add.reduceat(terms, b.mul_starts, axis=-1))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, float)
            if np.any(other == 0):
                raise JetError("division by zero")
            return Jet(self.n_vars, self.order, self.c / other[..., None])
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, r):
        if isinstance(r, (int, np.integer)):
            return self.ipow(int(r))
        return apply_univariate(self, "pow", float(r))

    def ipow(self, k: int) -> "Jet":
        if k < 0:
            return self.ipow(-k).reciprocal()
        out = Jet.constant(np.ones(self.shape), self.n_vars, self.order)
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def reciprocal(self) -> "Jet":
        return apply_univariate(self, "recip")

    def sqrt(self):
        return apply_univariate(self, "sqrt")

    def sin(self):
        return apply_univariate(self, "sin")

    def cos(self):
        return apply_univariate(self, "cos")

    def exp(self):
        return apply_univariate(self, "exp")

    def log(self):
        return apply_univariate(self, "log")

    def nilpotent(self) -> "Jet":
        """The jet minus its value (all derivative information)."""
        c = self.c.copy()
        c[..., 0] = 0.0
        return Jet(self.n_vars, self.order, c)


# -- free-function API ---------------------------------------------------------

def lift(kind: str, n_vars: int, order: int, *, value: float = 0.0, index: int = 0) -> Jet:
    """Lift a constant (``kind="constant"``) or a coordinate (``kind="variable"``)."""
    if kind == "constant":
        return Jet.constant(value, n_vars, order)
    if kind == "variable":
        return Jet.variable(index, value, n_vars, order)
    raise JetError(f"unknown lift kind {kind!r}")


def variables(point: Sequence[float], order: int) -> list[Jet]:
    """Coordinate jets u^1..u^n at ``point``."""
    n = len(point)
    return [Jet.variable(i, float(p), n, order) for i, p in enumerate(point)]


def arith(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if isinstance(b, Jet) and np.any(np.asarray(b.value) == 0):
            raise JetError("division by a jet with zero value")
        return a / b
    raise JetError(f"unknown operation {op!r}")


def partial(a: Jet, idx: DerivIndex | Sequence[int]):
    return a.partial(idx)


def _derivs(name: str, x: np.ndarray, r: float | None, k: int) -> list[np.ndarray]:
    """f, f', ..., f^(k) evaluated at x."""
    if name == "sin":
        s, c = np.sin(x), np.cos(x)
        return [s, c, -s, -c][:k + 1]
    if name == "cos":
        s, c = np.sin(x), np.cos(x)
        return [c, -s, -c, s][:k + 1]
    if name == "exp":
        e = np.exp(x)
        return [e] * (k + 1)
    if name == "log":
        if np.any(x <= 0):
            raise JetError("log of non-positive value")
        return [np.log(x), 1 / x, -1 / x**2, 2 / x**3][:k + 1]
    if name == "sqrt":
        if np.any(x <= 0):
            raise JetError("sqrt of non-positive value")
        s = np.sqrt(x)
        return [s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x)][:k + 1]
    if name == "recip":
        if np.any(x == 0):
            raise JetError("division by a jet with zero value")
        return [1 / x, -1 / x**2, 2 / x**3, -6 / x**4][:k + 1]
    if name == "pow":
        if np.any(x <= 0):
            raise JetError("non-integer power of non-positive value")
        out, coef = [], 1.0
        for j in range(k + 1):
            out.append(coef * x ** (r - j))
            coef *= r - j
        return out
    if name == "tan":
        t = np.tan(x)
        s2 = 1 + t * t
        return [t, s2, 2 * t * s2, s2 * (2 * s2 + 4 * t * t)][:k + 1]
    if name == "sinh":
        s, c = np.sinh(x), np.cosh(x)
        return [s, c, s, c][:k + 1]
    if name == "cosh":
        s, c = np.sinh(x), np.cosh(x)
        return [c, s, c, s][:k + 1]
    if name == "neg":
        return [-x, -np.ones_like(x), np.zeros_like(x), np.zeros_like(x)][:k + 1]
    raise JetError(f"unknown univariate function {name!r}")


UNIVARIATE = ("sin", "cos", "tan", "sinh", "cosh", "exp", "log", "sqrt", "pow", "neg", "recip")


def apply_univariate(a: Jet, name: str, r: float | None = None) -> Jet:
    """Compose a scalar function with a jet: f(a0 + d) = sum_k f^(k)(a0) d^k / k!."""
    x = np.asarray(a.c[..., 0])
    ds = _derivs(name, x, r, a.order)
    d = a.nilpotent()
    out = Jet.constant(ds[0], a.n_vars, a.order)
    power = None
    for k in range(1, a.order + 1):
        power = d if power is None else power * d
        out = out + power * (ds[k] / math.factorial(k))
    return out


def compose(outer: Jet, inners: Sequence[Jet] | Jet) -> Jet:
    """Multivariate chain rule: ``outer`` is a jet in m variables, ``inners`` m jets in n variables.

    ``outer`` is interpreted as expanded around the values of ``inners``; it may
    carry batch axes, the inners must be scalar jets (or one jet with batch shape (m,)).
    """
    if isinstance(inners, Jet):
        inner_list = list(inners) if inners.shape else [inners]
    else:
        inner_list = list(inners)
    if len(inner_list) != outer.n_vars:
        raise JetError(f"outer jet has {outer.n_vars} variables but {len(inner_list)} inners given")
    n, k = inner_list[0].n_vars, inner_list[0].order
    for j in inner_list:
        if j.shape:
            raise JetError("inner jets must be scalar")
        if j.n_vars != n or j.order != k:
            raise JetError("inner jets must share n_vars and order")
    if outer.order != k:
        raise JetError(f"order mismatch: outer {outer.order}, inner {k}")
    ob = outer.basis
    deltas = [j.nilpotent() for j in inner_list]
    powers = []
    for d in deltas:
        ps = [Jet.constant(1.0, n, k)]
        for _ in range(k):
            ps.append(ps[-1] * d)
        powers.append(ps)
    monos = []
    for e in ob.exps:
        mono = powers[0][e[0]]
        for i in range(1, len(e)):
            if e[i]:
                mono = mono * powers[i][e[i]]
        monos.append(mono.c)
    monos = np.stack(monos)  # (ncoef_outer, ncoef_inner)
    c = np.einsum("...a,ag->...g", outer.c / ob.factorials, monos)
    return Jet(n, k, c)


def jet_einsum(subscripts: str, a: Jet, b: Jet) -> Jet:
    """``np.einsum`` over the batch axes of two jets with Leibniz products on the coefficient axis."""
    a._check(b)
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    bs = a.basis
    ta = a.c[..., bs.mul_a]
    tb = b.c[..., bs.mul_b]
    t = np.einsum(f"{sa}Z,{sb}Z->{out}Z", ta, tb) * bs.mul_w
    return Jet(a.n_vars, a.order, np.add.reduceat(t, bs.mul_starts, axis=-1))


def jet_matinv(a: Jet) -> Jet:
    """Inverse of a jet-valued square matrix (batch shape (k, k))."""
    a0 = a.c[..., 0]
    inv0 = np.linalg.inv(a0)
    inv0_j = Jet.constant(inv0, a.n_vars, a.order)
    d = a.nilpotent()
    # (A0 + D)^-1 = sum_k (-A0^-1 D)^k A0^-1; D^k vanishes above the jet order
    step = jet_einsum("ij,jk->ik", -inv0_j, d)
    term = inv0_j
    out = inv0_j
    for _ in range(a.order):
        term = jet_einsum("ij,jk->ik", step, term)
        out = out + term
    return out


def jet_det(a: Jet) -> Jet:
    """Determinant of a jet-valued square matrix by permutation expansion (size <= 6)."""
    from .levi_civita import permutations_with_sign

    k = a.shape[-1]
    out = None
    for perm, sign in permutations_with_sign(k):
        term = a[0, perm[0]]
        for r in range(1, k):
            term = term * a[r, perm[r]]
        term = term * float(sign)
        out = term if out is None else out + term
    return out


def finite_difference(f: Callable[[np.ndarray], float], point: Iterable[float], axis: int,
                      step: float = 1e-5) -> float:
    """Central difference of a float function along one axis (test oracle)."""
    p = np.array(list(point), float)
    hp, hm = p.copy(), p.copy()
    hp[axis] += step
    hm[axis] -= step
    return (f(hp) - f(hm)) / (2 * step)
