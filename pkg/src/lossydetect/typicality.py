"""Method-of-types toolkit: sequences, empirical types and box typicality.

Typicality is checked cell by cell against a reference pmf.  Only cells
with nonzero reference mass are compared (for the joint and conditional
sets: cells where p(b|a) Q_x(a) is nonzero), so cells outside the support
are left unconstrained.  Batch helpers operate on count arrays so the
simulator can test many codewords at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .prob import Alphabet, Dist, Joint, entropy

FLOAT_SLACK = 1e-12

__all__ = [
    "SymbolSeq",
    "EmpiricalType",
    "empirical_joint_type",
    "is_delta_typical",
    "is_jointly_typical",
    "is_conditionally_typical",
    "empirical_conditional_entropy",
    "pair_counts",
    "batch_pair_counts",
    "box_typical",
    "conditional_box_typical",
]


@dataclass(frozen=True)
class SymbolSeq:
    alphabet: Alphabet
    symbols: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.array(self.symbols, dtype=np.int64).ravel()
        if s.size and (s.min() < 0 or s.max() >= self.alphabet.size):
            raise ValueError(f"symbols must lie in [0, {self.alphabet.size})")
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    @classmethod
    def of(cls, symbols, size: int = 2) -> "SymbolSeq":
        return cls(Alphabet(size), symbols)

    def __len__(self) -> int:
        return int(self.symbols.size)


@dataclass(frozen=True)
class EmpiricalType:
    counts: np.ndarray = field(repr=False)
    n: int

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.sum() != self.n:
            raise ValueError(f"counts sum to {c.sum()}, expected {self.n}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def as_dict(self) -> dict:
        return {idx if len(idx) > 1 else idx[0]: int(v) for idx, v in np.ndenumerate(self.counts) if v}

    def pmf(self) -> np.ndarray:
        return self.counts / self.n

    def dist(self, roles=None) -> Dist | Joint:
        m = self.pmf()
        if m.ndim == 1:
            return Dist.from_array(m)
        return Joint.from_array(m, roles or tuple(f"A{i}" for i in range(m.ndim)))


def _check_lengths(seqs) -> int:
    n = {len(s) for s in seqs}
    if len(n) != 1:
        raise ValueError(f"sequences have different lengths {sorted(n)}")
    return n.pop()


def empirical_joint_type(*seqs: SymbolSeq) -> EmpiricalType:
    if not 1 <= len(seqs) <= 3:
        raise ValueError("expected one to three sequences")
    n = _check_lengths(seqs)
    shape = tuple(s.alphabet.size for s in seqs)
    flat = np.ravel_multi_index(tuple(s.symbols for s in seqs), shape) if n else np.zeros(0, dtype=np.int64)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return EmpiricalType(counts, n)


def box_typical(counts: np.ndarray, n: int, ref: np.ndarray, delta: float, mask: np.ndarray | None = None) -> np.ndarray:
    """``|counts/n - ref| <= delta`` on masked cells; batch axes lead, cell axes trail ``ref``."""
    ref = np.asarray(ref, dtype=float)
    cell_axes = tuple(range(-ref.ndim, 0))
    if mask is None:
        mask = ref > 0
    dev = np.abs(np.asarray(counts) / n - ref)
    return np.all((dev <= delta + FLOAT_SLACK) | ~mask, axis=cell_axes)


def conditional_box_typical(counts: np.ndarray, n: int, p_cond: np.ndarray, delta: float, ref_joint: np.ndarray | None = None) -> np.ndarray:
    """Typicality of pair counts ``[..., a, b]`` on cells where p(b|a) Q_a(a) > 0.

    With ``ref_joint`` the comparison target is the joint pmf (joint
    typicality); otherwise it is p(b|a) Q_a(a) (conditional typicality).
    """
    counts = np.asarray(counts)
    q_a = counts.sum(axis=-1) / n
    target = p_cond * q_a[..., None]
    mask = target > 0
    ref = target if ref_joint is None else np.broadcast_to(ref_joint, target.shape)
    dev = np.abs(counts / n - ref)
    return np.all((dev <= delta + FLOAT_SLACK) | ~mask, axis=(-2, -1))


def _cond_of(joint: np.ndarray) -> np.ndarray:
    pa = joint.sum(axis=1, keepdims=True)
    return np.divide(joint, pa, out=np.zeros_like(joint), where=pa > 0)


def is_delta_typical(seq: SymbolSeq, dist: Dist, delta: float) -> bool:
    if seq.alphabet.size != dist.alphabet.size:
        raise ValueError("alphabet mismatch")
    t = empirical_joint_type(seq)
    return bool(box_typical(t.counts, t.n, dist.mass, delta))


def _pair_mass(joint: Joint, first: SymbolSeq, second: SymbolSeq) -> np.ndarray:
    m = joint.mass
    if m.shape != (first.alphabet.size, second.alphabet.size):
        raise ValueError("alphabet mismatch")
    return m


def is_jointly_typical(x: SymbolSeq, y: SymbolSeq, joint: Joint, delta: float) -> bool:
    """Pair typicality; ``joint`` axes are ordered as (x, y)."""
    m = _pair_mass(joint, x, y)
    t = empirical_joint_type(x, y)
    return bool(conditional_box_typical(t.counts, t.n, _cond_of(m), delta, ref_joint=m))


def is_conditionally_typical(y: SymbolSeq, x: SymbolSeq, joint: Joint, delta: float) -> bool:
    """Whether ``y`` is conditionally typical given ``x``; ``joint`` axes are ordered as (x, y)."""
    m = _pair_mass(joint, x, y)
    t = empirical_joint_type(x, y)
    return bool(conditional_box_typical(t.counts, t.n, _cond_of(m), delta))


def empirical_conditional_entropy(u: SymbolSeq, y: SymbolSeq) -> float:
    """H(u | y) of the joint type, in bits."""
    t = empirical_joint_type(u, y)
    p = t.pmf()
    return max(entropy(p) - entropy(p.sum(axis=0)), 0.0)


def pair_counts(a: np.ndarray, b: np.ndarray, na: int, nb: int) -> np.ndarray:
    """Joint counts of two symbol arrays along the last axis; result ``[..., na, nb]``."""
    flat = a.astype(np.int64) * nb + b
    lead = flat.shape[:-1]
    flat2 = flat.reshape(-1, flat.shape[-1])
    out = np.zeros((flat2.shape[0], na * nb), dtype=np.int64)
    for k in range(na * nb):
        out[:, k] = np.count_nonzero(flat2 == k, axis=1)
    return out.reshape(*lead, na, nb)


def batch_pair_counts(codebook: np.ndarray, seqs: np.ndarray, nu: int, nx: int) -> np.ndarray:
    """Joint counts of every codeword against every sequence, ``[m, t, u, x]``.

    Uses one-hot float32 matrix products; exact for block lengths below 2**24.
    """
    out = np.empty((codebook.shape[0], seqs.shape[0], nu, nx), dtype=np.int32)
    cb = [(codebook == u).astype(np.float32) for u in range(nu)]
    sq = [(seqs == x).astype(np.float32).T for x in range(nx)]
    for u in range(nu):
        for x in range(nx):
            out[:, :, u, x] = np.rint(cb[u] @ sq[x]).astype(np.int32)
    return out
