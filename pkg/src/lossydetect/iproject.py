"""KL projection onto the set of (U,X,Y) joints with prescribed (U,X) and (U,Y) marginals.

The main routine runs iterative proportional fitting started at the target,
which converges to the I-projection whenever the feasible set meets the
target's support.  Feasibility on that support is decided beforehand with a
linear program, and small problems are cross-checked by projected gradient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .prob import Joint, kl_divergence

MAX_ITER = 10_000
VALUE_TOL = 1e-10
RESIDUAL_TOL = 1e-9
MARGINAL_TOL = 1e-9
CHECK_CELLS = 64

__all__ = [
    "CouplingConstraints",
    "ProjectionResult",
    "EmptyCouplingSet",
    "NonConvergence",
    "min_kl_over_coupling_set",
    "kl_lower_bound",
    "projected_gradient_kl",
]


class EmptyCouplingSet(ValueError):
    """The two bivariate constraints admit no joint distribution."""


class NonConvergence(RuntimeError):
    """Iteration cap reached; ``result`` holds the best iterate and its gap."""

    def __init__(self, message: str, result: "ProjectionResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class CouplingConstraints:
    q_ux: Joint
    q_uy: Joint

    def __post_init__(self):
        if self.q_ux.roles != ("U", "X") or self.q_uy.roles != ("U", "Y"):
            raise ValueError("constraints must be joints over (U, X) and (U, Y)")
        gap = np.max(np.abs(self.q_ux.mass.sum(axis=1) - self.q_uy.mass.sum(axis=1)), initial=0.0)
        if self.q_ux.shape[0] != self.q_uy.shape[0] or gap > MARGINAL_TOL:
            raise EmptyCouplingSet(f"U-marginals of the constraints differ by {gap:.3e}")

    @classmethod
    def from_joint(cls, j: Joint) -> "CouplingConstraints":
        """Constraints matching the (U,X) and (U,Y) marginals of a (U,X,Y) joint."""
        j = j.transpose(("U", "X", "Y"))
        return cls(Joint.from_array(j.mass.sum(axis=2), ("U", "X")), Joint.from_array(j.mass.sum(axis=1), ("U", "Y")))

    @property
    def shape(self) -> tuple:
        return (self.q_ux.shape[0], self.q_ux.shape[1], self.q_uy.shape[1])


@dataclass(frozen=True)
class ProjectionResult:
    value: float
    argmin: Joint | None
    iterations: int
    gap: float
    converged: bool = True
    check_value: float | None = field(default=None)

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)


def _residual(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(max(np.max(np.abs(p.sum(axis=2) - a)), np.max(np.abs(p.sum(axis=1) - b))))


def _ipf(start: np.ndarray, a: np.ndarray, b: np.ndarray, max_iter: int):
    """Alternate (U,X) and (U,Y) scaling from ``start``; yields (p, iteration)."""
    p = start.copy()
    for it in range(1, max_iter + 1):
        s = p.sum(axis=2)
        p *= np.divide(a, s, out=np.zeros_like(a), where=s > 0)[:, :, None]
        s = p.sum(axis=1)
        p *= np.divide(b, s, out=np.zeros_like(b), where=s > 0)[:, None, :]
        yield p, it


def _kl_arr(p: np.ndarray, t: np.ndarray) -> float:
    pos = p > 0
    if np.any(t[pos] <= 0):
        return math.inf
    return float(max(np.sum(p[pos] * np.log2(p[pos] / t[pos])), 0.0))


def _equality_system(support: np.ndarray, a: np.ndarray, b: np.ndarray):
    nu, nx, ny = support.shape
    idx = np.flatnonzero(support.ravel())
    rows = []
    rhs = []
    grid = np.arange(nu * nx * ny).reshape(nu, nx, ny)
    for u in range(nu):
        for x in range(nx):
            rows.append(np.isin(idx, grid[u, x, :]).astype(float))
            rhs.append(a[u, x])
        for y in range(ny):
            rows.append(np.isin(idx, grid[u, :, y]).astype(float))
            rhs.append(b[u, y])
    return idx, np.array(rows), np.array(rhs)


def _feasible_on_support(support: np.ndarray, a: np.ndarray, b: np.ndarray) -> bool:
    idx, a_eq, b_eq = _equality_system(support, a, b)
    if idx.size == 0:
        return False
    res = linprog(np.zeros(idx.size), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


def _random_feasible(support: np.ndarray, a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    start = rng.exponential(size=support.shape) * support
    p = start
    for p, _ in _ipf(start, a, b, 2000):
        if _residual(p, a, b) < 1e-12:
            break
    return p.copy()


def projected_gradient_kl(target: np.ndarray, a: np.ndarray, b: np.ndarray, start: np.ndarray, iters: int = 2000) -> float:
    """Minimize D(p || target) over the coupling set by projected gradient descent.

    The gradient is projected onto the null space of the marginal constraints
    and steps stop short of the nonnegativity boundary, so every iterate stays
    feasible.  Used as an independent check of the IPF solution.
    """
    support = (target > 0) & (a[:, :, None] > 0) & (b[:, None, :] > 0)
    idx, a_eq, _ = _equality_system(support, a, b)
    t = target.ravel()[idx]
    proj = np.eye(idx.size) - np.linalg.pinv(a_eq) @ a_eq
    x = start.ravel()[idx].copy()

    def f(v):
        pos = v > 0
        return float(np.sum(v[pos] * np.log2(v[pos] / t[pos])))

    fx = f(x)
    step = 1.0
    for _ in range(iters):
        g = np.log2(np.maximum(x, 1e-300) / t) + 1.0 / math.log(2.0)
        d = -proj @ g
        slope = float(g @ d)
        if slope > -1e-14:
            break
        neg = d < 0
        t_max = float(np.min(-x[neg] / d[neg])) if neg.any() else math.inf
        step = min(step, 0.99 * t_max)
        while True:
            cand = x + step * d
            fc = f(cand)
            if fc <= fx + 1e-4 * step * slope or step < 1e-16:
                break
            step *= 0.5
        if fx - fc < 1e-14:
            x, fx = (cand, fc) if fc < fx else (x, fx)
            break
        x, fx = cand, fc
        step *= 2.0
    return max(fx, 0.0)


def min_kl_over_coupling_set(
    target: Joint,
    constraints: CouplingConstraints,
    *,
    max_iter: int = MAX_ITER,
    check: bool | None = None,
    seed: int = 0,
) -> ProjectionResult:
    """Minimize D(P || target) over joints P on (U,X,Y) meeting both bivariate constraints.

    ``check`` runs the projected-gradient cross-check from three random
    feasible starts; by default it runs when the problem has at most 64 cells.
    """
    t = target.transpose(("U", "X", "Y")).mass
    a, b = constraints.q_ux.mass, constraints.q_uy.mass
    if t.shape != constraints.shape:
        raise ValueError(f"target shape {t.shape} does not match constraints {constraints.shape}")
    support = t > 0
    if not _feasible_on_support(support, a, b):
        return ProjectionResult(math.inf, None, 0, math.inf)

    prev = math.inf
    best = None
    it = 0
    converged = False
    for p, it in _ipf(t.copy(), a, b, max_iter):
        val = _kl_arr(p, t)
        res = _residual(p, a, b)
        best = (p.copy(), val, res)
        if abs(prev - val) < VALUE_TOL and res < RESIDUAL_TOL:
            converged = True
            break
        prev = val
    p, val, res = best
    p = p / p.sum()
    argmin = Joint.from_array(p, ("U", "X", "Y"))
    result = ProjectionResult(val, argmin, it, res, converged)
    if not converged:
        raise NonConvergence(f"IPF stopped after {it} iterations with residual {res:.3e}", result)

    if check is None:
        check = t.size <= CHECK_CELLS
    if check:
        rng = np.random.default_rng(seed)
        pg = min(projected_gradient_kl(t, a, b, _random_feasible(support, a, b, rng)) for _ in range(3))
        result = ProjectionResult(val, argmin, it, res, converged, pg)
        if pg < val - 1e-6:
            raise NonConvergence(f"projected gradient found {pg:.9f} below IPF value {val:.9f}", result)
    return result


def kl_lower_bound(p_uy: Joint, q_uy: Joint) -> float:
    """D(P_UY || Q_UY), a lower bound on the coupling-set minimum by data processing."""
    return kl_divergence(p_uy, q_uy)
