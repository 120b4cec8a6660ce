"""Finite-alphabet probability algebra in bits.

Distributions, joints and channels are immutable wrappers around numpy
arrays.  Every information measure also accepts a bare array so that the
optimizers and the simulator can skip the wrapper on hot paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SUM_TOL = 1e-12

__all__ = [
    "Alphabet",
    "Dist",
    "Joint",
    "Channel",
    "binary_entropy",
    "binary_entropy_inv",
    "binary_convolve",
    "binary_kl",
    "entropy",
    "kl_divergence",
    "mutual_information",
    "conditional_mutual_information",
    "compose",
    "marginalize",
    "condition",
    "merge_axes",
    "bsc",
    "identity_channel",
    "cascade",
    "product_joint",
]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Alphabet:
    size: int
    labels: tuple = ()

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError(f"alphabet size must be >= 1, got {self.size}")
        labels = tuple(self.labels) if self.labels else tuple(range(int(self.size)))
        if len(labels) != self.size:
            raise ValueError("labels must match alphabet size")
        if len(set(labels)) != len(labels):
            raise ValueError("alphabet labels must be distinct")
        object.__setattr__(self, "size", int(self.size))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of(cls, size: int) -> "Alphabet":
        return cls(size)


@dataclass(frozen=True)
class Dist:
    alphabet: Alphabet
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _frozen(self.mass)
        if m.shape != (self.alphabet.size,):
            raise ValueError(f"mass shape {m.shape} does not match alphabet size {self.alphabet.size}")
        if np.any(m < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(m.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"mass sums to {m.sum()!r}, not 1")
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_array(cls, mass, labels=None) -> "Dist":
        m = np.asarray(mass, dtype=float)
        return cls(Alphabet(m.size, tuple(labels) if labels is not None else ()), m)

    @classmethod
    def bernoulli(cls, p: float) -> "Dist":
        return cls.from_array([1.0 - p, p])

    def normalized(self) -> "Dist":
        return Dist(self.alphabet, self.mass / self.mass.sum())


@dataclass(frozen=True)
class Joint:
    """Joint pmf whose axes are tagged with role names such as ``"U"`` or ``"X"``.

    Composite roles (produced by :func:`merge_axes`) are written ``"U+Y"``.
    """

    roles: tuple
    alphabets: tuple
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        roles = tuple(self.roles)
        alphabets = tuple(self.alphabets)
        m = _frozen(self.mass)
        if len(roles) < 1:
            raise ValueError("a joint needs at least one axis")
        if len(set(roles)) != len(roles):
            raise ValueError(f"duplicate role tags {roles}")
        if len(alphabets) != len(roles) or m.ndim != len(roles):
            raise ValueError("roles, alphabets and mass dimensions disagree")
        if m.shape != tuple(a.size for a in alphabets):
            raise ValueError(f"mass shape {m.shape} does not match alphabets")
        if np.any(m < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(m.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"mass sums to {m.sum()!r}, not 1")
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "alphabets", alphabets)
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_array(cls, mass, roles: Sequence[str]) -> "Joint":
        m = np.asarray(mass, dtype=float)
        return cls(tuple(roles), tuple(Alphabet(s) for s in m.shape), m)

    @property
    def shape(self) -> tuple:
        return self.mass.shape

    def axis(self, role: str) -> int:
        try:
            return self.roles.index(role)
        except ValueError:
            raise KeyError(f"role {role!r} not in joint with roles {self.roles}") from None

    def normalized(self) -> "Joint":
        return Joint(self.roles, self.alphabets, self.mass / self.mass.sum())

    def transpose(self, roles: Sequence[str]) -> "Joint":
        order = [self.axis(r) for r in roles]
        return Joint(tuple(roles), tuple(self.alphabets[i] for i in order), np.transpose(self.mass, order))


@dataclass(frozen=True)
class Channel:
    """Row-stochastic matrix ``rows[input, output]``."""

    input: Alphabet
    output: Alphabet
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = _frozen(self.rows)
        if r.shape != (self.input.size, self.output.size):
            raise ValueError(f"rows shape {r.shape} does not match alphabets")
        if np.any(r < 0):
            raise ValueError("transition probabilities must be nonnegative")
        bad = np.abs(r.sum(axis=1) - 1.0) > SUM_TOL
        if np.any(bad):
            raise ValueError(f"rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        object.__setattr__(self, "rows", r)

    @classmethod
    def from_array(cls, rows) -> "Channel":
        r = np.asarray(rows, dtype=float)
        return cls(Alphabet(r.shape[0]), Alphabet(r.shape[1]), r)


def _mass(obj) -> np.ndarray:
    if isinstance(obj, (Dist, Joint)):
        return obj.mass
    return np.asarray(obj, dtype=float)


def _check_unit(x: float, name: str) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0) or math.isnan(x):
        raise ValueError(f"{name} must lie in [0, 1], got {x}")
    return x


def binary_entropy(x: float) -> float:
    x = _check_unit(x, "x")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def binary_entropy_inv(h: float, tol: float = 1e-15) -> float:
    """Inverse of :func:`binary_entropy` on ``[0, 1/2]``, by bisection."""
    h = _check_unit(h, "h")
    if h == 0.0:
        return 0.0
    if h == 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < h:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def binary_convolve(a: float, b: float) -> float:
    a = _check_unit(a, "a")
    b = _check_unit(b, "b")
    return a * (1.0 - b) + b * (1.0 - a)


def binary_kl(a: float, b: float) -> float:
    return kl_divergence([1.0 - a, a], [1.0 - b, b])


def _xlog2x(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p, dtype=float)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


def entropy(p) -> float:
    """Shannon entropy of a Dist, Joint or array, in bits."""
    m = _mass(p)
    return float(-_xlog2x(m).sum())


def kl_divergence(p, q) -> float:
    """D(p || q) in bits; ``math.inf`` when p is not absolutely continuous wrt q."""
    if isinstance(p, Joint) and isinstance(q, Joint) and p.roles != q.roles:
        raise ValueError(f"role mismatch {p.roles} vs {q.roles}")
    pm, qm = _mass(p), _mass(q)
    if pm.shape != qm.shape:
        raise ValueError(f"shape mismatch {pm.shape} vs {qm.shape}")
    pos = pm > 0
    if np.any(qm[pos] <= 0):
        return math.inf
    val = float(np.sum(pm[pos] * (np.log2(pm[pos]) - np.log2(qm[pos]))))
    return max(val, 0.0)


def _mi2(m: np.ndarray) -> float:
    pa = m.sum(axis=1)
    pb = m.sum(axis=0)
    val = -_xlog2x(pa).sum() - _xlog2x(pb).sum() + _xlog2x(m).sum()
    return float(max(val, 0.0))


def mutual_information(j) -> float:
    m = _mass(j)
    if m.ndim != 2:
        raise ValueError("mutual_information needs a joint over exactly two axes")
    return _mi2(m)


def _as_roles(r) -> tuple:
    if isinstance(r, str):
        return (r,)
    return tuple(r)


def _group(m: np.ndarray, roles: tuple, groups: Sequence[tuple]) -> np.ndarray:
    """Marginalize onto the listed role groups and flatten each group to one axis."""
    used = [r for g in groups for r in g]
    missing = [r for r in used if r not in roles]
    if missing:
        raise KeyError(f"roles {missing} not present in {roles}")
    if len(set(used)) != len(used):
        raise ValueError(f"role groups overlap: {groups}")
    drop = tuple(i for i, r in enumerate(roles) if r not in used)
    m = m.sum(axis=drop) if drop else m
    kept = [r for r in roles if r in used]
    m = np.transpose(m, [kept.index(r) for r in used])
    sizes = []
    k = 0
    for g in groups:
        s = 1
        for _ in g:
            s *= m.shape[k]
            k += 1
        sizes.append(s)
    return m.reshape(sizes)


def conditional_mutual_information(j: Joint, pair, given=()) -> float:
    """I(A; B | C) for role groups A, B, C of ``j``.

    Each of ``pair[0]``, ``pair[1]`` and ``given`` may be a single role or a
    tuple of roles; tuples are merged into one composite axis.  Roles not
    mentioned are summed out.
    """
    a, b = (_as_roles(r) for r in pair)
    c = _as_roles(given)
    if not c:
        return mutual_information(_group(j.mass, j.roles, [a, b]))
    m = _group(j.mass, j.roles, [a, b, c])
    pc = m.sum(axis=(0, 1))
    total = 0.0
    for k in np.flatnonzero(pc > 0):
        total += pc[k] * _mi2(m[:, :, k] / pc[k])
    return float(max(total, 0.0))


def merge_axes(j: Joint, roles: Sequence[str], new_role: str | None = None) -> Joint:
    """Collapse several axes into a single composite axis (row-major order)."""
    roles = tuple(roles)
    new_role = new_role or "+".join(roles)
    rest = tuple(r for r in j.roles if r not in roles)
    m = _group(j.mass, j.roles, [roles] + [(r,) for r in rest])
    alph = [Alphabet(m.shape[0])] + [j.alphabets[j.axis(r)] for r in rest]
    return Joint((new_role,) + rest, tuple(alph), m)


def compose(d: Dist, c: Channel, roles: tuple = ("X", "Y")) -> Joint:
    """Joint of an input distribution pushed through a channel."""
    if d.alphabet.size != c.input.size:
        raise ValueError(f"alphabet mismatch: dist has {d.alphabet.size} symbols, channel input {c.input.size}")
    return Joint(tuple(roles), (d.alphabet, c.output), d.mass[:, None] * c.rows)


def marginalize(j: Joint, keep) -> Dist | Joint:
    """Marginal of ``j`` on the roles in ``keep``; a Dist when one role is kept."""
    keep = _as_roles(keep)
    for r in keep:
        j.axis(r)
    drop = tuple(i for i, r in enumerate(j.roles) if r not in keep)
    m = j.mass.sum(axis=drop) if drop else j.mass
    kept = [r for r in j.roles if r in keep]
    m = np.transpose(m, [kept.index(r) for r in keep])
    if len(keep) == 1:
        return Dist(j.alphabets[j.axis(keep[0])], m)
    return Joint(keep, tuple(j.alphabets[j.axis(r)] for r in keep), m)


def condition(j: Joint, given: str) -> Channel:
    """Conditional of the other axis given ``given`` for a two-axis joint.

    Rows for zero-probability inputs are set uniform; they never carry mass.
    """
    if len(j.roles) != 2:
        raise ValueError("condition needs a two-axis joint; marginalize or merge first")
    i = j.axis(given)
    m = j.mass if i == 0 else j.mass.T
    pin = m.sum(axis=1)
    rows = np.full_like(m, 1.0 / m.shape[1])
    pos = pin > 0
    rows[pos] = m[pos] / pin[pos, None]
    rows[pos] /= rows[pos].sum(axis=1, keepdims=True)
    other = 1 - i
    return Channel(j.alphabets[i], j.alphabets[other], rows)


def bsc(p: float) -> Channel:
    p = _check_unit(p, "crossover")
    return Channel.from_array([[1.0 - p, p], [p, 1.0 - p]])


def identity_channel(size: int) -> Channel:
    return Channel.from_array(np.eye(size))


def cascade(*channels: Channel) -> Channel:
    """Serial composition of channels, left to right."""
    rows = channels[0].rows
    for c in channels[1:]:
        if rows.shape[1] != c.input.size:
            raise ValueError("channel alphabets do not chain")
        rows = rows @ c.rows
    rows = rows / rows.sum(axis=1, keepdims=True)
    return Channel(channels[0].input, channels[-1].output, rows)


def product_joint(*dists: Dist, roles: Iterable[str]) -> Joint:
    m = dists[0].mass
    for d in dists[1:]:
        m = np.multiply.outer(m, d.mass)
    return Joint(tuple(roles), tuple(d.alphabet for d in dists), m)
