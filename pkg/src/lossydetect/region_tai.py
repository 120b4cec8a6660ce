"""Rate / exponent / distortion region for testing against independence.

Covers single-point evaluation of the auxiliary-channel characterization,
the closed-form binary symmetric source (BSS) region, the binary
Wyner-Ziv curve, and a heuristic frontier optimizer for general alphabets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .prob import (
    Channel,
    Joint,
    binary_convolve,
    binary_entropy,
    binary_entropy_inv,
    bsc,
    conditional_mutual_information,
    mutual_information,
)

GRID_STEP = 1.0 / 512
REFINE_TOL = 1e-5

__all__ = [
    "TradeoffPoint",
    "BssParams",
    "DistortionMeasure",
    "FrontierConfig",
    "Infeasible",
    "FrontierBudgetExceeded",
    "eval_tai_point",
    "bss_joint",
    "bss_region_point",
    "bss_min_distortion",
    "bss_timeshare_min_distortion",
    "wz_binary_rate",
    "optimize_tai_frontier",
    "frontier_distortion",
    "frontier_max_exponent",
    "pareto_reduce",
]


class Infeasible(ValueError):
    """The requested (rate, exponent) pair lies outside the region."""


class FrontierBudgetExceeded(RuntimeError):
    def __init__(self, message: str, partial: list):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class DistortionMeasure:
    matrix: np.ndarray = field(repr=False)
    d_max: float | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("distortion matrix must be 2-D (source x reconstruction)")
        d_max = float(m.max()) if self.d_max is None else float(self.d_max)
        if not math.isfinite(d_max) or np.any(m < 0) or np.any(m > d_max):
            raise ValueError("distortion entries must lie in [0, d_max] with finite d_max")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "d_max", d_max)

    @classmethod
    def hamming(cls, size: int = 2) -> "DistortionMeasure":
        return cls(1.0 - np.eye(size), 1.0)

    @classmethod
    def zero(cls, size: int = 2) -> "DistortionMeasure":
        return cls(np.zeros((size, size)), 0.0)


@dataclass(frozen=True)
class TradeoffPoint:
    rate: float
    exponent: float
    distortion: float
    distortion1: float | None = None
    channels: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("rate", "exponent", "distortion"):
            v = getattr(self, name)
            if not v >= 0:
                raise ValueError(f"{name} must be nonnegative, got {v}")


@dataclass(frozen=True)
class BssParams:
    alpha: float
    beta: float
    theta: float
    p: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5], got {v}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 < self.p < 0.5:
            raise ValueError(f"p must lie in (0, 0.5), got {self.p}")


def bss_joint(p: float) -> Joint:
    """Uniform binary X observed through BSC(p)."""
    return Joint.from_array(0.5 * bsc(p).rows, ("X", "Y"))


def _clamp(v: float) -> float:
    return max(float(v), 0.0)


def _cell_costs(m_uvxy: np.ndarray, dmat: np.ndarray) -> np.ndarray:
    """Expected distortion per (u, v, y, xhat) cell."""
    return np.einsum("uvxy,xz->uvyz", m_uvxy, dmat)


def _argmin_map(costs: np.ndarray) -> np.ndarray:
    return np.argmin(costs, axis=-1)


def eval_tai_point(p_xy: Joint, q_v_given_x: Channel, q_u_given_v: Channel, d: DistortionMeasure) -> TradeoffPoint:
    """Rate, exponent and best achievable distortion of one auxiliary-channel pair.

    The chain U - V - X - Y is built from ``p_xy``, V|X and U|V.  The
    reconstruction map is the per-cell minimizer of expected distortion with
    ties broken toward the smallest reconstruction index.
    """
    p_xy = p_xy.transpose(("X", "Y"))
    nx = p_xy.shape[0]
    if q_v_given_x.input.size != nx:
        raise ValueError(f"V|X channel expects {q_v_given_x.input.size} inputs, source has {nx}")
    if q_u_given_v.input.size != q_v_given_x.output.size:
        raise ValueError("U|V channel input does not match V alphabet")
    if d.matrix.shape[0] != nx:
        raise ValueError("distortion matrix rows do not match source alphabet")
    m = np.einsum("vu,xv,xy->uvxy", q_u_given_v.rows, q_v_given_x.rows, p_xy.mass)
    j = Joint.from_array(m / m.sum(), ("U", "V", "X", "Y"))
    rate = conditional_mutual_information(j, ("U", "X")) + conditional_mutual_information(j, ("V", "X"), ("U", "Y"))
    exponent = conditional_mutual_information(j, ("U", "Y"))
    distortion = float(_cell_costs(j.mass, d.matrix).min(axis=-1).sum())
    return TradeoffPoint(_clamp(rate), _clamp(exponent), _clamp(distortion), channels=(q_v_given_x, q_u_given_v))


def bss_region_point(params: BssParams) -> TradeoffPoint:
    a, b, th, p = params.alpha, params.beta, params.theta, params.p
    exponent = 1.0 - binary_entropy(binary_convolve(binary_convolve(a, b), p))
    rate = exponent + th * (binary_entropy(binary_convolve(a, p)) - binary_entropy(a))
    return TradeoffPoint(_clamp(rate), _clamp(exponent), th * a + (1.0 - th) * p)


def _binning_gain(a: float, p: float) -> float:
    return binary_entropy(binary_convolve(a, p)) - binary_entropy(a)


def _alpha_max(exponent: float, p: float) -> float:
    """Largest alpha with 1 - H2(alpha * p) >= exponent."""
    c = binary_entropy_inv(max(0.0, 1.0 - exponent))
    return min(max((c - p) / (1.0 - 2.0 * p), 0.0), 0.5)


def _grid_refine(f, lo: float, hi: float, step: float = GRID_STEP, tol: float = REFINE_TOL) -> tuple[float, float]:
    """Minimize ``f`` on [lo, hi]: uniform grid then bounded scalar refinement around the best cell."""
    if hi <= lo:
        return lo, f(lo)
    grid = np.unique(np.concatenate([np.arange(lo, hi, step), [hi]]))
    vals = np.array([f(x) for x in grid])
    k = int(np.argmin(vals))
    best_x, best_v = float(grid[k]), float(vals[k])
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if b > a:
        res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": tol})
        if res.fun < best_v:
            best_x, best_v = float(res.x), float(res.fun)
    return best_x, best_v


def bss_min_distortion(rate: float, exponent: float, p: float, *, step: float = GRID_STEP) -> float:
    """Smallest closed-form BSS distortion meeting ``rate`` and ``exponent``.

    For fixed alpha the optimum sets beta so the exponent constraint is tight
    and pushes theta as high as the rate allows, which leaves a 1-D search
    over alpha.  Raises :class:`Infeasible` outside the region.
    """
    if rate < 0 or exponent < 0:
        raise ValueError("rate and exponent must be nonnegative")
    if not 0.0 < p < 0.5:
        raise ValueError(f"p must lie in (0, 0.5), got {p}")
    e_max = 1.0 - binary_entropy(p)
    if exponent > e_max:
        raise Infeasible(f"exponent {exponent} exceeds I(X;Y) = {e_max:.6f}")
    if exponent > rate:
        raise Infeasible(f"exponent {exponent} exceeds rate {rate}")
    slack = rate - exponent

    def dist(a: float) -> float:
        w = _binning_gain(a, p)
        theta = 1.0 if w <= slack else slack / w
        return theta * a + (1.0 - theta) * p

    hi = min(_alpha_max(exponent, p), p)
    _, best = _grid_refine(dist, 0.0, hi, step)
    return min(best, p)


def bss_timeshare_min_distortion(rate: float, exponent: float, p: float, *, step: float = GRID_STEP) -> float:
    """Smallest BSS distortion over time-sharing of two cascaded-BSC schemes.

    Branch a uses V = X + Bern(alpha), U = V + Bern(beta) and reconstructs
    with V.  Branch b uses V = U = X + Bern(alpha * beta) and reconstructs
    with the better of U and Y.  Both branches share the exponent.  Rates
    follow the rate identity, so every returned value is achievable by a
    single auxiliary pair with a time-sharing flag in U.
    """
    e_max = 1.0 - binary_entropy(p)
    if exponent > e_max or exponent > rate:
        raise Infeasible(f"(rate={rate}, exponent={exponent}) outside the region")

    def best_for(a: float) -> float:
        # beta chosen so that the exponent is tight: alpha * beta * p = c
        c = binary_entropy_inv(max(0.0, 1.0 - exponent))
        ab = (c - p) / (1.0 - 2.0 * p)
        if ab < a - 1e-15:
            return math.inf
        r_a = exponent + _binning_gain(a, p)
        if r_a <= rate:
            return a
        r_b = 1.0 - binary_entropy(min(max(ab, 0.0), 0.5))
        d_b = min(ab, p)
        if r_b > rate + 1e-12:
            return math.inf
        theta = (rate - r_b) / (r_a - r_b)
        return theta * a + (1.0 - theta) * d_b

    c = binary_entropy_inv(max(0.0, 1.0 - exponent))
    hi = min(max((c - p) / (1.0 - 2.0 * p), 0.0), 0.5)
    if exponent + _binning_gain(hi, p) > rate and 1.0 - binary_entropy(hi) > rate + 1e-12:
        raise Infeasible(f"rate {rate} below I(U;X) needed for exponent {exponent}")
    _, best = _grid_refine(lambda a: min(best_for(a), p), 0.0, hi, step)
    return best


def wz_binary_rate(distortion: float, p: float, *, step: float = GRID_STEP) -> float:
    """Binary Wyner-Ziv rate with time-sharing between BSC(delta) and a silent scheme."""
    if distortion < 0:
        raise ValueError("distortion must be nonnegative")
    if not 0.0 < p < 0.5:
        raise ValueError(f"p must lie in (0, 0.5), got {p}")
    if distortion >= p:
        return 0.0

    def rate(delta: float) -> float:
        theta = (p - distortion) / (p - delta)
        return theta * _binning_gain(delta, p)

    _, best = _grid_refine(rate, 0.0, distortion, step)
    return max(best, 0.0)


# ---------------------------------------------------------------------------
# Frontier optimizer


@dataclass(frozen=True)
class FrontierConfig:
    """Search settings for :func:`optimize_tai_frontier`.

    ``targets`` lists explicit (rate, exponent) pairs; when empty the targets
    are ``rates`` times ``n_exponents`` evenly spaced exponents up to
    min(rate, I(X;Y)).
    """

    rates: tuple = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    n_exponents: int = 8
    targets: tuple = ()
    u_size: int | None = None
    v_size: int | None = None
    starts: int = 3
    random_seeds: int = 6
    lloyd_iters: int = 4
    polish_rounds: int = 2
    max_evals: int = 5_000_000
    seed: int = 0


def _xlogx_sum(a: np.ndarray) -> float:
    a = a[a > 0]
    return float(np.sum(a * np.log2(a)))


class _Model:
    """Fast evaluator for a fixed source joint and alphabet sizes."""

    def __init__(self, pxy: np.ndarray, dmat: np.ndarray, nu: int, nv: int, budget: int):
        self.pxy = pxy
        self.dmat = dmat
        self.nx = pxy.shape[0]
        self.nu, self.nv = nu, nv
        self.n_w = self.nx * nv
        self.evals = 0
        self.budget = budget

    def channels(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = z[: self.n_w].reshape(self.nx, self.nv)
        q = z[self.n_w :].reshape(self.nv, self.nu)
        w = np.exp(w - w.max(axis=1, keepdims=True))
        q = np.exp(q - q.max(axis=1, keepdims=True))
        return w / w.sum(axis=1, keepdims=True), q / q.sum(axis=1, keepdims=True)

    def joint(self, z: np.ndarray) -> np.ndarray:
        self.evals += 1
        if self.evals > self.budget:
            raise _Budget()
        w, q = self.channels(z)
        return np.einsum("vu,xv,xy->uvxy", q, w, self.pxy)

    @staticmethod
    def rate_exponent(m: np.ndarray) -> tuple[float, float]:
        h = _xlogx_sum
        pu = m.sum(axis=(1, 2, 3))
        px = m.sum(axis=(0, 1, 3))
        py = m.sum(axis=(0, 1, 2))
        pux = m.sum(axis=(1, 3))
        puy = m.sum(axis=(1, 2))
        puvy = m.sum(axis=2)
        puxy = m.sum(axis=1)
        i_ux = h(pux) - h(pu) - h(px)
        i_vx_uy = h(m) + h(puy) - h(puvy) - h(puxy)
        i_uy = h(puy) - h(pu) - h(py)
        return i_ux + i_vx_uy, i_uy

    def distortion(self, m: np.ndarray, g: np.ndarray | None = None) -> float:
        costs = _cell_costs(m, self.dmat)
        if g is None:
            return float(costs.min(axis=-1).sum())
        return float(np.take_along_axis(costs, g[..., None], axis=-1).sum())

    def g_map(self, z: np.ndarray) -> np.ndarray:
        return _argmin_map(_cell_costs(self.joint(z), self.dmat))

    def point(self, z: np.ndarray) -> TradeoffPoint:
        w, q = self.channels(z)
        return eval_tai_point(
            Joint.from_array(self.pxy, ("X", "Y")),
            Channel.from_array(w),
            Channel.from_array(q),
            DistortionMeasure(self.dmat),
        )


class _Budget(Exception):
    pass


def _seed_logits(nx: int, nv: int, nu: int, rng: np.random.Generator, n_random: int) -> list[np.ndarray]:
    """Noisy-identity cascades at several noise levels plus random logits."""
    seeds = []
    for a in (0.01, 0.08, 0.25):
        for b in (0.01, 0.08, 0.25, 0.45):
            w = np.full((nx, nv), a / max(nv - 1, 1))
            for x in range(nx):
                w[x, x % nv] = 1.0 - a if nv > 1 else 1.0
            q = np.full((nv, nu), b / max(nu - 1, 1))
            for v in range(nv):
                q[v, v % nu] = 1.0 - b if nu > 1 else 1.0
            seeds.append(np.concatenate([np.log(w).ravel(), np.log(q).ravel()]))
    for _ in range(n_random):
        seeds.append(rng.normal(scale=3.0, size=nx * nv + nv * nu))
    return seeds


def _solve_target(model: _Model, z0: np.ndarray, rate: float, exponent: float, lloyd_iters: int) -> np.ndarray:
    """Alternate between the reconstruction map and SLSQP over the channels."""
    z = z0
    g = model.g_map(z)
    for _ in range(lloyd_iters):
        gg = g

        def obj(v, gg=gg):
            return model.distortion(model.joint(v), gg)

        def c_rate(v):
            return rate - model.rate_exponent(model.joint(v))[0]

        def c_exp(v):
            return model.rate_exponent(model.joint(v))[1] - exponent

        res = minimize(
            obj,
            z,
            method="SLSQP",
            constraints=[{"type": "ineq", "fun": c_rate}, {"type": "ineq", "fun": c_exp}],
            options={"maxiter": 200, "ftol": 1e-11},
        )
        z = np.clip(res.x, -40.0, 40.0)
        g_new = model.g_map(z)
        if np.array_equal(g_new, g):
            break
        g = g_new
    return z


def _solve_max_exponent(model: _Model, z0: np.ndarray, rate: float) -> np.ndarray:
    res = minimize(
        lambda v: -model.rate_exponent(model.joint(v))[1],
        z0,
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": lambda v: rate - model.rate_exponent(model.joint(v))[0]}],
        options={"maxiter": 300, "ftol": 1e-12},
    )
    return np.clip(res.x, -40.0, 40.0)


def _violation(model: _Model, z: np.ndarray, rate: float, exponent: float) -> tuple[float, float]:
    m = model.joint(z)
    r, e = model.rate_exponent(m)
    return max(r - rate, 0.0) + max(exponent - e, 0.0), model.distortion(m)


def pareto_reduce(points: list[TradeoffPoint], tol: float = 1e-12) -> list[TradeoffPoint]:
    """Drop points dominated in (low rate, high exponent, low distortion); deterministic order."""
    pts = sorted(points, key=lambda t: (t.rate, -t.exponent, t.distortion))
    keep: list[TradeoffPoint] = []
    for t in pts:
        dominated = any(
            k.rate <= t.rate + tol and k.exponent >= t.exponent - tol and k.distortion <= t.distortion + tol for k in keep
        )
        if not dominated:
            keep.append(t)
    return keep


def frontier_distortion(points: list[TradeoffPoint], rate: float, exponent: float, tol: float = 1e-6) -> float:
    """Smallest distortion among points meeting the rate and exponent targets within ``tol``."""
    ok = [t.distortion for t in points if t.rate <= rate + tol and t.exponent >= exponent - tol]
    return min(ok) if ok else math.inf


def frontier_max_exponent(points: list[TradeoffPoint], rate: float, tol: float = 1e-6) -> float:
    ok = [t.exponent for t in points if t.rate <= rate + tol]
    return max(ok) if ok else 0.0


def optimize_tai_frontier(p_xy: Joint, d: DistortionMeasure, grid: FrontierConfig = FrontierConfig()) -> list[TradeoffPoint]:
    """Heuristic Pareto frontier of (rate, exponent, distortion) for general alphabets.

    For each target the search picks the most promising seeds, runs SLSQP
    over softmax-parameterized channels with the reconstruction map held
    fixed, updates the map, and finishes with random perturbation restarts.
    Every returned point is the exact evaluation of its own channels, so
    achievability holds even when optimality is not certified.
    """
    p_xy = p_xy.transpose(("X", "Y"))
    pxy = np.asarray(p_xy.mass)
    nx = pxy.shape[0]
    if d.matrix.shape[0] != nx:
        raise ValueError("distortion matrix rows do not match source alphabet")
    nu = min(grid.u_size or nx, nx + 2)
    nv = min(grid.v_size or nx * nu, nx * nu + 1)
    model = _Model(pxy, d.matrix, nu, nv, grid.max_evals)
    rng = np.random.default_rng(grid.seed)
    seeds = _seed_logits(nx, nv, nu, rng, grid.random_seeds)
    i_xy = mutual_information(pxy)

    if grid.targets:
        targets = [(float(r), float(e)) for r, e in grid.targets]
    else:
        targets = []
        for r in grid.rates:
            top = min(float(r), i_xy)
            targets += [(float(r), float(e)) for e in np.linspace(0.0, top, grid.n_exponents)]

    points: list[TradeoffPoint] = []
    try:
        for r in sorted({t[0] for t in targets}):
            ranked = sorted(seeds, key=lambda z: -model.rate_exponent(model.joint(z))[1] + 10 * max(model.rate_exponent(model.joint(z))[0] - r, 0))
            for z0 in ranked[: grid.starts]:
                points.append(model.point(_solve_max_exponent(model, z0, r)))
        for r, e in targets:
            scored = sorted(seeds, key=lambda z: _violation(model, z, r, e))
            best_z, best_key = None, None
            for z0 in scored[: grid.starts]:
                z = _solve_target(model, z0, r, e, grid.lloyd_iters)
                key = _violation(model, z, r, e)
                points.append(model.point(z))
                if best_key is None or (round(key[0], 9), key[1]) < (round(best_key[0], 9), best_key[1]):
                    best_z, best_key = z, key
            for _ in range(grid.polish_rounds):
                z = _solve_target(model, best_z + rng.normal(scale=0.5, size=best_z.size), r, e, grid.lloyd_iters)
                key = _violation(model, z, r, e)
                points.append(model.point(z))
                if (round(key[0], 9), key[1]) < (round(best_key[0], 9), best_key[1]):
                    best_z, best_key = z, key
    except _Budget:
        raise FrontierBudgetExceeded(f"evaluation budget {grid.max_evals} exhausted", pareto_reduce(points)) from None
    return pareto_reduce(points)
