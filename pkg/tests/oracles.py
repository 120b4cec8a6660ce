"""Independent reference computations used by the test suite."""
import numpy as np


def grid_min_kl_222(target: np.ndarray, a: np.ndarray, b: np.ndarray, step: float = 1e-3) -> float:
    """Dense-grid minimum of D(P || target) over 2x2x2 joints with (U,X) marginal ``a`` and (U,Y) marginal ``b``.

    For each u the 2x2 slice has one free entry s = P[u,0,0]; the objective
    separates over u, so the 2-D grid minimum is the sum of 1-D minima.
    """
    total = 0.0
    for u in range(2):
        lo, hi = max(0.0, b[u, 0] - a[u, 1]), min(a[u, 0], b[u, 0])
        s = np.arange(0.0, 1.0 + step / 2, step)
        s = np.concatenate([s[(s >= lo) & (s <= hi)], [lo, hi]])
        cells = np.stack([s, a[u, 0] - s, b[u, 0] - s, a[u, 1] - b[u, 0] + s]).clip(0.0)
        t = np.array([target[u, 0, 0], target[u, 0, 1], target[u, 1, 0], target[u, 1, 1]])[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(cells > 0, cells * np.log2(cells / t), 0.0).sum(axis=0)
        total += float(f.min())
    return total


def iproject_suite(count: int = 50, seed: int = 1):
    """Fixed suite of random strictly positive 2x2x2 targets and constraint joints."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        t = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        j = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        out.append((t, j))
    return out



def h2(x):
    """Binary entropy on arrays, straight from the definition."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -x * np.log2(x) - (1 - x) * np.log2(1 - x)
    return np.nan_to_num(v)


def conv(a, b):
    return a * (1 - b) + b * (1 - a)


def bss_grid_min_distortion(rate: float, exponent: float, p: float, step: float = 1 / 128) -> float:
    """Exhaustive (alpha, beta, theta) grid over the closed-form binary region; inf when no grid point is feasible."""
    g = np.arange(0.0, 0.5 + step / 2, step)
    th = np.arange(0.0, 1.0 + step / 2, step)
    a, b, t = np.meshgrid(g, g, th, indexing="ij")
    e = 1.0 - h2(conv(conv(a, b), p))
    r = e + t * (h2(conv(a, p)) - h2(a))
    d = t * a + (1 - t) * p
    ok = (e >= exponent - 1e-12) & (r <= rate + 1e-12)
    return float(d[ok].min()) if ok.any() else float("inf")


def wz_grid_rate(distortion: float, p: float, step: float = 1e-3) -> float:
    """Grid over delta of theta * (H2(p * delta) - H2(delta)) with theta set by theta*delta + (1-theta)*p = D."""
    best = np.inf
    for delta in np.arange(0.0, distortion + step / 2, step):
        theta = (p - distortion) / (p - delta)
        best = min(best, float(theta * (h2(conv(delta, p)) - h2(delta))))
    return best


def bss_rate_exponent(rate: float, p: float, step: float = 1e-4) -> float:
    """max I(U;Y) subject to I(U;X) <= rate over U = X + Bern(a), uniform X, Y = X + Bern(p)."""
    a = np.arange(0.0, 0.5 + step / 2, step)
    ok = 1.0 - h2(a) <= rate + 1e-12
    return float((1.0 - h2(conv(a[ok], p))).max())


def bss_g_oracle(delta: float, p: float, q: float, r_prime: float, starts: int = 24, seed: int = 0) -> float:
    """Infimum of the binning-error exponent for the BSS pair, by multi-start bounded minimization.

    Free variables are y(u, x) = Q(Y=1 | U=u, X=x); X is uniform and
    U = X + Bern(delta).  Written from the definition, independent of the
    library's grid search.
    """
    from scipy.optimize import minimize

    w = np.array([[1 - delta, delta], [delta, 1 - delta]])  # w[x, u]
    base = 0.5 * w.T  # base[u, x]
    i_ux = 1.0 - float(h2(delta))
    if i_ux <= r_prime:
        return float("inf")

    def hyp(c):
        py = np.array([[1 - c, c], [c, 1 - c]])  # py[x, y]
        return base[:, :, None] * py[None, :, :]

    refs = [hyp(p), hyp(q)]

    def f(z):
        y1 = z.reshape(2, 2)
        m = base[:, :, None] * np.stack([1 - y1, y1], axis=-1)
        kls = []
        for ref in refs:
            pos = m > 0
            if np.any(ref[pos] == 0):
                kls.append(np.inf)
            else:
                kls.append(float(np.sum(m[pos] * np.log2(m[pos] / ref[pos]))))
        muy = m.sum(axis=1)
        pu, py = muy.sum(axis=1), muy.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            i_uy = float(np.nansum(muy * np.log2(muy / np.outer(pu, py))))
        return min(kls) + max(r_prime - i_ux + i_uy, 0.0)

    rng = np.random.default_rng(seed)
    best = np.inf
    for k in range(starts):
        z0 = rng.random(4)
        res = minimize(f, z0, method="Powell", bounds=[(0, 1)] * 4, options={"xtol": 1e-10, "ftol": 1e-13, "maxiter": 20000})
        best = min(best, float(res.fun))
    return best
