"""Achievable exponents for general hypothesis pairs, with and without binning.

Strategies are channels U|X.  Two exponents compete for each strategy: the
testing exponent (a KL projection, or its (U,Y) lower bound) and the
exponent of the binning error, either the G function minimized over joint
types or the bin-scan quantity G-hat.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .iproject import CouplingConstraints, min_kl_over_coupling_set
from .prob import (
    Channel,
    Joint,
    binary_convolve,
    binary_entropy,
    binary_entropy_inv,
    bsc,
    kl_divergence,
)

MARGINAL_TOL = 1e-9
STRATEGY_TOL = 1e-9

__all__ = [
    "HypothesisPair",
    "BssStrategy",
    "ExponentCurvePoint",
    "BinningSearch",
    "StrategySearch",
    "Fig3Table",
    "GridBudgetExceeded",
    "strategy_joint",
    "g_function",
    "binning_exponent_prop3",
    "testing_exponent",
    "g_hat",
    "exponent_prop3",
    "exponent_prop4",
    "nonbinned_baseline",
    "stein_bound",
    "zero_region_thresholds",
    "fig3_table",
]


class GridBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class HypothesisPair:
    h0: Joint
    h1: Joint

    def __post_init__(self):
        h0 = self.h0.transpose(("X", "Y"))
        h1 = self.h1.transpose(("X", "Y"))
        if h0.shape != h1.shape:
            raise ValueError("hypotheses must share alphabets")
        gx = np.max(np.abs(h0.mass.sum(axis=1) - h1.mass.sum(axis=1)))
        gy = np.max(np.abs(h0.mass.sum(axis=0) - h1.mass.sum(axis=0)))
        if gx > MARGINAL_TOL or gy > MARGINAL_TOL:
            raise ValueError(f"hypotheses must share X and Y marginals (gaps {gx:.2e}, {gy:.2e})")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "h1", h1)

    @classmethod
    def bss(cls, p: float, q: float) -> "HypothesisPair":
        """Uniform binary X seen through BSC(p) under H0 and BSC(q) under H1."""
        return cls(Joint.from_array(0.5 * bsc(p).rows, ("X", "Y")), Joint.from_array(0.5 * bsc(q).rows, ("X", "Y")))

    @property
    def p_x(self) -> np.ndarray:
        return self.h0.mass.sum(axis=1)

    def joint(self, i: int) -> Joint:
        return self.h0 if i == 0 else self.h1


@dataclass(frozen=True)
class BssStrategy:
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.delta <= 0.5:
            raise ValueError(f"delta must lie in [0, 0.5], got {self.delta}")

    @property
    def channel(self) -> Channel:
        return bsc(self.delta)


@dataclass(frozen=True)
class ExponentCurvePoint:
    delta: float
    testing_exponent: float
    g_exponent: float
    g_hat_exponent: float
    overall_prop3: float = field(init=False)
    overall_prop4: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "overall_prop3", min(self.testing_exponent, self.g_exponent))
        object.__setattr__(self, "overall_prop4", min(self.testing_exponent, max(self.g_hat_exponent, 0.0)))


@dataclass(frozen=True)
class BinningSearch:
    """Grid-then-refine settings for the infimum over joint types.

    ``step`` is the coarse grid spacing per free conditional entry and
    ``max_points`` caps the grid size.  ``q_x`` pins the X-marginal of the
    candidate types; None uses the hypotheses' common X-marginal.
    """

    step: float = 1.0 / 16
    refine: bool = True
    n_starts: int = 4
    max_points: int = 20_000_000
    chunk: int = 200_000
    q_x: tuple | None = None


@dataclass(frozen=True)
class StrategySearch:
    """Strategy family for the outer supremum.

    Binary sources use BSC(delta) on a delta grid of spacing ``delta_step``.
    Other alphabets use a grid over U|X channels with |U| = ``u_size`` and
    per-row simplex spacing ``channel_step``.
    """

    delta_step: float = 1.0 / 512
    extra_deltas: tuple = ()
    u_size: int | None = None
    channel_step: float = 0.25
    testing_mode: str = "lower_bound"
    binning: BinningSearch = BinningSearch()


def _check_strategy(strategy: Channel, hyp: HypothesisPair) -> None:
    if strategy.input.size != hyp.h0.shape[0]:
        raise ValueError("strategy input alphabet does not match X")


def strategy_joint(hyp: HypothesisPair, i: int, strategy: Channel) -> np.ndarray:
    """Array m[u, x, y] = P_i(x, y) W(u | x)."""
    _check_strategy(strategy, hyp)
    return np.einsum("xy,xu->uxy", hyp.joint(i).mass, strategy.rows)


def _h(a: np.ndarray) -> float:
    a = a[a > 0]
    return float(-np.sum(a * np.log2(a)))


def _info_ux_uy(m: np.ndarray) -> tuple[float, float]:
    pu = m.sum(axis=(1, 2))
    i_ux = _h(pu) + _h(m.sum(axis=(0, 2))) - _h(m.sum(axis=2))
    i_uy = _h(pu) + _h(m.sum(axis=(0, 1))) - _h(m.sum(axis=1))
    return max(i_ux, 0.0), max(i_uy, 0.0)


def g_function(q_uxy: Joint, r_prime: float, hyp: HypothesisPair, strategy: Channel) -> float:
    """Binning-error exponent of one joint type ``q_uxy`` (roles U, X, Y).

    Infinite unless I(U;X) under the type exceeds ``r_prime``.
    """
    q = q_uxy.transpose(("U", "X", "Y")).mass
    _check_strategy(strategy, hyp)
    q_ux = q.sum(axis=2)
    q_x = q_ux.sum(axis=0)
    pos = q_x > 0
    cond = q_ux[:, pos] / q_x[pos]
    if np.max(np.abs(cond - strategy.rows[pos].T), initial=0.0) > STRATEGY_TOL:
        raise ValueError("type's U|X conditional differs from the strategy")
    i_ux, i_uy = _info_ux_uy(q)
    if i_ux <= r_prime:
        return math.inf
    kl = min(kl_divergence(q, strategy_joint(hyp, i, strategy)) for i in (0, 1))
    return kl + max(r_prime - i_ux + i_uy, 0.0)


def _row_grid(ny: int, step: float) -> np.ndarray:
    """All points of the (ny-1)-simplex with coordinates on multiples of ``step``."""
    k = int(round(1.0 / step))
    pts = [c for c in itertools.product(range(k + 1), repeat=ny - 1) if sum(c) <= k]
    return np.array([list(c) + [k - sum(c)] for c in pts], dtype=float) / k


def _batch_g(r: np.ndarray, base: np.ndarray, logp: list[np.ndarray], r_prime: float, i_ux: float) -> np.ndarray:
    """G over a batch of conditionals r[b, u, x, y] with fixed base[u, x] = Q_X(x) W(u|x)."""
    q = base[None, :, :, None] * r
    with np.errstate(divide="ignore", invalid="ignore"):
        logq = np.where(q > 0, np.log2(np.where(q > 0, q, 1.0)), 0.0)
        qlogq = np.sum(q * logq, axis=(1, 2, 3))
        kls = []
        for lp in logp:
            cross = np.where(q > 0, q * lp[None], 0.0)
            bad = np.any((q > 0) & ~np.isfinite(lp)[None], axis=(1, 2, 3))
            kl = qlogq - np.sum(np.where(np.isfinite(cross), cross, 0.0), axis=(1, 2, 3))
            kls.append(np.where(bad, np.inf, np.maximum(kl, 0.0)))
        q_uy = q.sum(axis=2)
        q_u = q_uy.sum(axis=2)
        q_y = q_uy.sum(axis=1)

        def hh(a, axes):
            return -np.sum(np.where(a > 0, a * np.log2(np.where(a > 0, a, 1.0)), 0.0), axis=axes)

        i_uy = np.maximum(hh(q_u, 1) + hh(q_y, 1) - hh(q_uy, (1, 2)), 0.0)
    return np.minimum(kls[0], kls[1]) + np.maximum(r_prime - i_ux + i_uy, 0.0)


def binning_exponent_prop3(
    strategy: Channel, r_prime: float, hyp: HypothesisPair, search: BinningSearch = BinningSearch()
) -> float:
    """Infimum of :func:`g_function` over joint types whose U|X equals the strategy.

    With the X-marginal pinned, I(U;X) is constant over the feasible types,
    so the branch condition is global.  The remaining free part is the
    conditional Y|(U,X); each KL term is convex in it and so is the clamped
    information term, so a coarse grid followed by bounded local refinement
    locates the infimum.
    """
    _check_strategy(strategy, hyp)
    q_x = hyp.p_x if search.q_x is None else np.asarray(search.q_x, dtype=float)
    base = strategy.rows.T * q_x[None, :]
    nu, nx = base.shape
    ny = hyp.h0.shape[1]
    i_ux, _ = _info_ux_uy(base[:, :, None] * np.ones((1, 1, 1)))
    if i_ux <= r_prime:
        return math.inf

    cond = [hyp.joint(i).mass / np.where(q_x > 0, hyp.p_x, 1.0)[:, None] for i in (0, 1)]
    # The type equal to either hypothesis costs only the clamped information term.
    for c in cond if np.allclose(q_x, hyp.p_x, rtol=0, atol=1e-12) else ():
        _, i_uy = _info_ux_uy(base[:, :, None] * c[None, :, :])
        if r_prime - i_ux + i_uy <= 0:
            return 0.0

    with np.errstate(divide="ignore"):
        logp = [np.log2(strategy_joint(hyp, i, strategy)) for i in (0, 1)]
    row = _row_grid(ny, search.step)
    cells = nu * nx
    n_points = row.shape[0] ** cells
    if n_points > search.max_points:
        raise GridBudgetExceeded(f"grid of {n_points} points exceeds cap {search.max_points}")

    best = math.inf
    best_idx: list[tuple[float, np.ndarray]] = []
    idx_iter = itertools.product(range(row.shape[0]), repeat=cells)
    while True:
        chunk = list(itertools.islice(idx_iter, search.chunk))
        if not chunk:
            break
        r = row[np.array(chunk)].reshape(len(chunk), nu, nx, ny)
        vals = _batch_g(r, base, logp, r_prime, i_ux)
        order = np.argsort(vals, kind="stable")[: search.n_starts]
        best_idx += [(float(vals[k]), r[k]) for k in order]
        best_idx = sorted(best_idx, key=lambda t: t[0])[: search.n_starts]
        best = min(best, float(vals[order[0]]))
    if not search.refine:
        return best

    def obj(z):
        r = np.abs(z).reshape(nu, nx, ny) + 1e-300
        r = r / r.sum(axis=2, keepdims=True)
        return float(_batch_g(r[None], base, logp, r_prime, i_ux)[0])

    for _, r0 in best_idx:
        res = minimize(obj, r0.ravel(), method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
        best = min(best, float(res.fun))
    return best


def testing_exponent(strategy: Channel, hyp: HypothesisPair, mode: str = "lower_bound") -> float:
    """Type-II exponent of the typicality test on (U, Y) for one strategy."""
    m0 = strategy_joint(hyp, 0, strategy)
    m1 = strategy_joint(hyp, 1, strategy)
    if mode == "lower_bound":
        return kl_divergence(m0.sum(axis=1), m1.sum(axis=1))
    if mode == "exact":
        j0 = Joint.from_array(m0 / m0.sum(), ("U", "X", "Y"))
        target = Joint.from_array(m1 / m1.sum(), ("U", "X", "Y"))
        return min_kl_over_coupling_set(target, CouplingConstraints.from_joint(j0)).value
    raise ValueError(f"unknown mode {mode!r}; use 'lower_bound' or 'exact'")


def g_hat(strategy: Channel, rate: float, hyp: HypothesisPair) -> float:
    """Bin-scan exponent R - I(X;U) + I(U;Y) under H0; may be negative."""
    i_ux, i_uy = _info_ux_uy(strategy_joint(hyp, 0, strategy))
    return rate - i_ux + i_uy


def stein_bound(hyp: HypothesisPair) -> float:
    return kl_divergence(hyp.h0, hyp.h1)


def _is_binary(hyp: HypothesisPair) -> bool:
    return hyp.h0.shape[0] == 2


def _strategies(hyp: HypothesisPair, search: StrategySearch) -> list[tuple[float | None, Channel]]:
    if _is_binary(hyp):
        n = int(round(0.5 / search.delta_step))
        deltas = sorted(set(np.linspace(0.0, 0.5, n + 1).tolist()) | set(search.extra_deltas))
        return [(d, bsc(d)) for d in deltas]
    nx = hyp.h0.shape[0]
    nu = min(search.u_size or nx, nx + 2)
    row = _row_grid(nu, search.channel_step)
    return [(None, Channel.from_array(row[list(c)])) for c in itertools.product(range(row.shape[0]), repeat=nx)]


def _bsc_min_delta(hyp: HypothesisPair, rate: float) -> float:
    """Smallest delta with I(U;X) <= rate for U = X through BSC(delta)."""
    if rate <= 0:
        return 0.5
    if rate >= 1.0 and np.allclose(hyp.p_x, 0.5):
        return 0.0
    if np.allclose(hyp.p_x, 0.5):
        return binary_entropy_inv(max(0.0, 1.0 - rate))

    def i_ux(d):
        return _info_ux_uy(strategy_joint(hyp, 0, bsc(d)))[0]

    if i_ux(0.0) <= rate:
        return 0.0
    lo, hi = 0.0, 0.5
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if i_ux(mid) <= rate else (mid, hi)
    return hi


def nonbinned_baseline(rate: float, hyp: HypothesisPair, search: StrategySearch = StrategySearch()) -> float:
    """Testing exponent of the best strategy whose codebook fits the rate without binning."""
    if _is_binary(hyp):
        return testing_exponent(bsc(_bsc_min_delta(hyp, rate)), hyp, search.testing_mode)
    best = 0.0
    for _, ch in _strategies(hyp, search):
        if _info_ux_uy(strategy_joint(hyp, 0, ch))[0] <= rate:
            best = max(best, testing_exponent(ch, hyp, search.testing_mode))
    return best


def _with_baseline(hyp: HypothesisPair, rate: float, search: StrategySearch) -> StrategySearch:
    if not _is_binary(hyp):
        return search
    extra = tuple(search.extra_deltas) + (_bsc_min_delta(hyp, rate),)
    return StrategySearch(search.delta_step, extra, search.u_size, search.channel_step, search.testing_mode, search.binning)


def exponent_prop3(r_prime: float, hyp: HypothesisPair, strategies: StrategySearch = StrategySearch()):
    """Best min(binning exponent, testing exponent) over the strategy family.

    Returns ``(value, strategy)``; for binary sources the strategy is a
    :class:`BssStrategy`, otherwise the channel itself.
    """
    best, arg = -math.inf, None
    for d, ch in _strategies(hyp, _with_baseline(hyp, r_prime, strategies)):
        t = testing_exponent(ch, hyp, strategies.testing_mode)
        if t <= best:
            continue
        v = min(t, binning_exponent_prop3(ch, r_prime, hyp, strategies.binning))
        if v > best:
            best, arg = v, (BssStrategy(d) if d is not None else ch)
    return max(best, 0.0), arg


def exponent_prop4(rate: float, hyp: HypothesisPair, strategies: StrategySearch = StrategySearch()):
    """Best min(max(G-hat, 0), testing exponent) over the strategy family."""
    best, arg = -math.inf, None
    for d, ch in _strategies(hyp, _with_baseline(hyp, rate, strategies)):
        v = min(testing_exponent(ch, hyp, strategies.testing_mode), max(g_hat(ch, rate, hyp), 0.0))
        if v > best:
            best, arg = v, (BssStrategy(d) if d is not None else ch)
    return max(best, 0.0), arg


def zero_region_thresholds(p: float, q: float, r_prime: float) -> dict:
    """Deltas at which H2(delta * c) - H2(delta) = r_prime for c = p and c = q.

    Below the q-threshold the binning exponent of the BSS model is zero.
    """

    def root(c):
        f = lambda d: binary_entropy(binary_convolve(d, c)) - binary_entropy(d) - r_prime
        if f(0.0) <= 0:
            return 0.0
        lo, hi = 0.0, 0.5
        while hi - lo > 1e-14:
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
        return 0.5 * (lo + hi)

    return {"h0": root(p), "h1": root(q)}


@dataclass(frozen=True)
class Fig3Table:
    rows: tuple
    p: float
    q: float
    rate: float
    prop3: float
    prop3_delta: float
    prop4: float
    prop4_delta: float
    nonbinned: float
    nonbinned_delta: float
    stein: float
    threshold_h0: float
    threshold_h1: float
    g_zero_boundary: float


def fig3_table(p: float, q: float, rate: float, deltas=None, *, binning: BinningSearch = BinningSearch(), testing_mode: str = "lower_bound") -> Fig3Table:
    """Exponent curves over a delta grid for the BSS pair (p, q) with rate budget ``rate``.

    The same rate is used as the binning rate for the binned scheme and as
    the total rate for the bin-scan scheme.
    """
    if not 0.0 <= p < q <= 0.5:
        raise ValueError("require 0 <= p < q <= 0.5")
    if deltas is None:
        deltas = np.linspace(0.0, 0.5, 257)
    hyp = HypothesisPair.bss(p, q)
    rows = []
    for d in deltas:
        ch = bsc(float(d))
        rows.append(
            ExponentCurvePoint(
                float(d),
                testing_exponent(ch, hyp, testing_mode),
                binning_exponent_prop3(ch, rate, hyp, binning),
                g_hat(ch, rate, hyp),
            )
        )
    k3 = max(range(len(rows)), key=lambda k: (rows[k].overall_prop3, -k))
    k4 = max(range(len(rows)), key=lambda k: (rows[k].overall_prop4, -k))
    zero = [r.delta for r in rows if r.g_exponent == 0.0]
    d_nb = _bsc_min_delta(hyp, rate)
    th = zero_region_thresholds(p, q, rate)
    return Fig3Table(
        rows=tuple(rows),
        p=p,
        q=q,
        rate=rate,
        prop3=rows[k3].overall_prop3,
        prop3_delta=rows[k3].delta,
        prop4=rows[k4].overall_prop4,
        prop4_delta=rows[k4].delta,
        nonbinned=testing_exponent(bsc(d_nb), hyp, testing_mode),
        nonbinned_delta=d_nb,
        stein=stein_bound(hyp),
        threshold_h0=th["h0"],
        threshold_h1=th["h1"],
        g_zero_boundary=max(zero) if zero else math.nan,
    )
