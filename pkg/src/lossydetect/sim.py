"""Monte-Carlo simulation of the random-coding schemes at small block lengths.

Three schemes share one trial engine:

* ``simulate_tai``: testing against independence with a U codebook, a
  binned V layer and a typicality test on (u, y).
* ``simulate_prop3``: per-type codebooks with random binning, minimum
  empirical conditional entropy decoding inside the bin, then a typicality
  test on the chosen (u, y).
* ``simulate_prop4``: same encoder, but the decoder declares H0 whenever any
  member of the bin is jointly typical with y.

Trials are generated in fixed blocks whose randomness is derived from
(seed, hypothesis, n, block), so results do not depend on how blocks are
distributed over worker processes.  Codebooks are built lazily from
(seed, stream, key) seeds and are therefore identical in every process.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .prob import Channel, Dist
from .region_general import HypothesisPair
from .region_tai import DistortionMeasure
from .typicality import batch_pair_counts, box_typical, conditional_box_typical, pair_counts

STREAM_DATA = 11
STREAM_U = 23
STREAM_V = 37
STREAM_TYPE = 41
SCAN_CHUNK = 4096

__all__ = [
    "SimConfig",
    "SimResult",
    "SweepResult",
    "Codebook",
    "BudgetError",
    "build_tai_codebook",
    "build_general_codebook",
    "simulate_tai",
    "simulate_prop3",
    "simulate_prop4",
    "sweep",
    "exponent_slope",
]


class BudgetError(MemoryError):
    """A codebook would exceed the configured memory budget."""

    def __init__(self, message: str, required_bytes: int):
        super().__init__(message)
        self.required_bytes = required_bytes


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _ceil_pow2(bits: float) -> int:
    """ceil(2**bits) robust to rounding just above an integer exponent."""
    v = 2.0**bits
    r = round(v)
    return int(r) if abs(v - r) < 1e-9 * max(1.0, v) else int(math.ceil(v))


def _check_budget(count: int, n: int, budget: int, what: str) -> None:
    need = int(count) * int(n)
    if need > budget:
        raise BudgetError(f"{what}: {count} codewords of length {n} need {need} bytes, budget {budget}", need)


# ---------------------------------------------------------------------------
# Configuration and results


@dataclass(frozen=True)
class SimConfig:
    """Parameters for one block length.

    Testing against independence uses ``q_v_given_x``, ``q_u_given_v`` and
    the rates ``rate_u`` (U codebook), ``rate_v`` (V codebook per u) and
    ``rate_bin`` (V bins).  The general schemes use ``strategy`` (U|X) and
    the binning rate ``r_prime``; when ``q_v_given_x`` and ``distortion`` are
    also given they add a V reconstruction layer.  ``codebook_slack`` adds
    extra rate to every per-type codebook.  ``workers`` only changes
    scheduling, never results.
    """

    n: int
    trials: int
    hyp: HypothesisPair
    delta_typ: float = 0.05
    seed: int = 0
    distortion: DistortionMeasure | None = None
    q_v_given_x: Channel | None = None
    q_u_given_v: Channel | None = None
    rate_u: float = 0.0
    rate_v: float = 0.0
    rate_bin: float = 0.0
    strategy: Channel | None = None
    r_prime: float = 0.0
    codebook_slack: float = 0.0
    block: int = 256
    workers: int = field(default=1, compare=False)
    budget_bytes: int = 1 << 30

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.delta_typ <= 0:
            raise ValueError("delta_typ must be > 0")
        for name in ("rate_u", "rate_v", "rate_bin", "r_prime", "codebook_slack"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.block < 1 or self.workers < 1:
            raise ValueError("block and workers must be >= 1")

    def with_n(self, n: int) -> "SimConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["n"] = n
        return SimConfig(**d)

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, Channel):
                return v.rows.tolist()
            if isinstance(v, DistortionMeasure):
                return {"matrix": v.matrix.tolist(), "d_max": v.d_max}
            if isinstance(v, HypothesisPair):
                return {"h0": v.h0.mass.tolist(), "h1": v.h1.mass.tolist()}
            return v

        return {f: enc(getattr(self, f)) for f in self.__dataclass_fields__ if f != "workers"}


@dataclass(frozen=True)
class SimResult:
    """Aggregated outcome counts for one scheme at one block length.

    Conditional estimates with no supporting trials are reported as None
    together with their support counts.
    """

    scheme: str
    n: int
    trials_h0: int
    trials_h1: int
    accepted_h0: int
    accepted_h1: int
    encoder_errors_h0: int
    encoder_errors_h1: int
    distortion_sum_correct: float = 0.0
    distortion_count_correct: int = 0
    distortion_sum_incorrect: float = 0.0
    distortion_count_incorrect: int = 0
    markov_typical: int = 0
    markov_total: int = 0
    d_max: float | None = None

    @property
    def alpha_hat(self) -> float:
        return 1.0 - self.accepted_h0 / self.trials_h0

    @property
    def beta_hat(self) -> float:
        return self.accepted_h1 / self.trials_h1

    @property
    def distortion_hat(self) -> float | None:
        if self.distortion_count_correct == 0:
            return None
        return self.distortion_sum_correct / self.distortion_count_correct

    @property
    def distortion_incorrect(self) -> float | None:
        if self.distortion_count_incorrect == 0:
            return None
        return self.distortion_sum_incorrect / self.distortion_count_incorrect

    @property
    def distortion_hat_uncond(self) -> float | None:
        """Distortion over all H0 decisions, weighting correct and incorrect detections."""
        dc = self.distortion_hat
        if dc is None:
            return None
        di = self.distortion_incorrect
        b = self.beta_hat
        return (1.0 - b) * dc + (b * di if di is not None else 0.0)

    @property
    def exponent_estimate(self) -> float | None:
        b = self.beta_hat
        return None if b <= 0 else -math.log2(b) / self.n

    @property
    def markov_fraction(self) -> float | None:
        return None if self.markov_total == 0 else self.markov_typical / self.markov_total

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("alpha_hat", "beta_hat", "distortion_hat", "distortion_incorrect", "distortion_hat_uncond", "exponent_estimate", "markov_fraction"):
            d[k] = getattr(self, k)
        return d


_COUNT_FIELDS = (
    "accepted_h0",
    "accepted_h1",
    "encoder_errors_h0",
    "encoder_errors_h1",
    "distortion_sum_correct",
    "distortion_count_correct",
    "distortion_sum_incorrect",
    "distortion_count_incorrect",
    "markov_typical",
    "markov_total",
)


@dataclass(frozen=True)
class SweepResult:
    ns: tuple
    results: tuple
    slope: float | None
    slope_se: float | None

    def to_dict(self) -> dict:
        return {
            "ns": list(self.ns),
            "results": [r.to_dict() for r in self.results],
            "slope": self.slope,
            "slope_se": self.slope_se,
        }


def exponent_slope(ns, betas, trials) -> tuple[float | None, float | None]:
    """Weighted least-squares slope of -log2(beta) against n, with its standard error.

    Weights use the delta-method variance (1 - beta) / (beta * T * ln(2)**2)
    of -log2 of a binomial proportion.  Block lengths with beta = 0 carry no
    usable information and are skipped.
    """
    pts = [(n, b, t) for n, b, t in zip(ns, betas, trials) if b > 0]
    if len(pts) < 2:
        return None, None
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([-math.log2(p[1]) for p in pts])
    var = np.array([max((1.0 - b) / (b * t * math.log(2.0) ** 2), 1.0 / (t * t)) for _, b, t in pts])
    w = 1.0 / var
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    return slope, float(math.sqrt(1.0 / sxx))


# ---------------------------------------------------------------------------
# Codebooks


@dataclass(frozen=True)
class Codebook:
    """Codewords (rows) with their bin indices.

    ``per_type_index`` maps a source type (tuple of counts) to its own
    sub-codebook for the general scheme; it is empty for flat codebooks.
    """

    codewords: np.ndarray = field(repr=False)
    bin_of: np.ndarray = field(repr=False)
    n_bins: int
    seed: int
    per_type_index: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return int(self.codewords.shape[0])

    def bin_members(self, b: int) -> np.ndarray:
        return np.flatnonzero(self.bin_of == b)


def _typical_draws(pmf: np.ndarray, count: int, n: int, delta: float, rng: np.random.Generator, max_rounds: int = 1000) -> np.ndarray:
    """``count`` i.i.d. sequences from ``pmf`` restricted to its delta-typical set."""
    out = []
    have = 0
    k = pmf.size
    for _ in range(max_rounds):
        batch = rng.choice(k, size=(max(2 * (count - have), 16), n), p=pmf).astype(np.uint8)
        counts = np.stack([(batch == a).sum(axis=1) for a in range(k)], axis=1)
        ok = box_typical(counts, n, pmf, delta)
        out.append(batch[ok])
        have += int(ok.sum())
        if have >= count:
            break
    else:
        raise RuntimeError("could not draw enough typical sequences; increase delta_typ")
    return np.concatenate(out)[:count]


def _conditional_draws(cond: np.ndarray, given: np.ndarray, count: int, delta: float, rng: np.random.Generator, max_rounds: int = 1000) -> np.ndarray:
    """``count`` sequences drawn letterwise from cond[given_i] and kept when conditionally typical."""
    n = given.size
    k_in, k_out = cond.shape
    cdf = np.cumsum(cond, axis=1)
    out = []
    have = 0
    for _ in range(max_rounds):
        m = max(2 * (count - have), 16)
        r = rng.random((m, n))
        batch = (r[:, :, None] > cdf[given][None, :, :]).sum(axis=2).clip(0, k_out - 1).astype(np.uint8)
        counts = batch_pair_counts(batch, given[None, :], k_out, k_in)[:, 0].transpose(0, 2, 1)
        ok = conditional_box_typical(counts, n, cond, delta)
        out.append(batch[ok])
        have += int(ok.sum())
        if have >= count:
            break
    else:
        raise RuntimeError("could not draw enough conditionally typical sequences; increase delta_typ")
    return np.concatenate(out)[:count]


def _random_bins(size: int, n_bins: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n_bins, size=size)


def build_tai_codebook(q_u: Dist, q_v_given_u: Channel, rates: tuple, n: int, seed: int, *, delta: float = 0.05, budget_bytes: int = 1 << 30) -> Codebook:
    """U codebook of size ceil(2**(n R_hat)) drawn from the typical set of ``q_u``.

    The per-u V codebooks (size ceil(2**(n S2)), binned into
    ceil(2**(n R')) bins) are generated on demand by :func:`tai_v_codebook`
    from the same seed.
    """
    r_hat, s2, r_bin = rates
    size = _ceil_pow2(n * r_hat)
    _check_budget(size, n, budget_bytes, "U codebook")
    words = _typical_draws(q_u.mass, size, n, delta, _rng(seed, STREAM_U, n))
    meta = {"q_v_given_u": q_v_given_u, "v_size": _ceil_pow2(n * s2), "v_bins": _ceil_pow2(n * r_bin), "delta": delta}
    return Codebook(words, np.arange(size), size, seed, {"tai": meta})


def tai_v_codebook(book: Codebook, s1: int) -> Codebook:
    """V codebook attached to U codeword ``s1``; deterministic in (seed, s1)."""
    meta = book.per_type_index["tai"]
    n = book.codewords.shape[1]
    rng = _rng(book.seed, STREAM_V, n, s1)
    words = _conditional_draws(meta["q_v_given_u"].rows, book.codewords[s1], meta["v_size"], meta["delta"], rng)
    return Codebook(words, _random_bins(meta["v_size"], meta["v_bins"], rng), meta["v_bins"], book.seed)


def _compositions(n: int, k: int):
    if k == 1:
        yield (n,)
        return
    for i in range(n, -1, -1):
        for rest in _compositions(n - i, k - 1):
            yield (i,) + rest


def _round_counts(target: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder rounding of ``target`` (summing to n) to integers."""
    base = np.floor(target).astype(int)
    rem = n - base.sum()
    order = np.argsort(-(target - base), kind="stable")
    base[order[:rem]] += 1
    return base


def _type_information(type_counts: tuple, strategy: Channel) -> float:
    q_x = np.array(type_counts, dtype=float) / sum(type_counts)
    m = q_x[:, None] * strategy.rows
    pu = m.sum(axis=0)
    pos = m > 0
    return float(max(np.sum(m[pos] * np.log2(m[pos] / (q_x[:, None] * pu[None, :])[pos])), 0.0))


def _type_codebook(type_counts: tuple, strategy: Channel, r_prime: float, n: int, seed: int, slack: float, budget: int) -> Codebook:
    info = _type_information(type_counts, strategy)
    size = _ceil_pow2(n * (info + slack))
    _check_budget(size, n, budget, f"sub-codebook for type {type_counts}")
    key = int(np.ravel_multi_index(type_counts, (n + 1,) * len(type_counts)))
    rng = _rng(seed, STREAM_TYPE, n, key)
    q_x = np.array(type_counts, dtype=float) / n
    u_counts = _round_counts(n * (q_x @ strategy.rows), n)
    base = np.repeat(np.arange(u_counts.size, dtype=np.uint8), u_counts)
    words = rng.permuted(np.tile(base, (size, 1)), axis=1)
    if math.log2(size) >= n * r_prime:
        n_bins = _ceil_pow2(n * r_prime)
        bins = _random_bins(size, n_bins, rng)
    else:
        n_bins = size
        bins = np.arange(size)
    return Codebook(words, bins, n_bins, seed)


def build_general_codebook(strategy: Channel, r_prime: float, n: int, seed: int, *, types=None, slack: float = 0.0, budget_bytes: int = 1 << 30) -> Codebook:
    """One sub-codebook per source type of length ``n``.

    Each sub-codebook holds ceil(2**(n I(Q_X; W))) codewords drawn uniformly
    from the U type class nearest to Q_X W.  Sub-codebooks larger than
    2**(n r') get a uniform random map onto ceil(2**(n r')) bins; smaller
    ones keep one codeword per bin.
    """
    nx = strategy.input.size
    types = list(_compositions(n, nx)) if types is None else [tuple(t) for t in types]
    total = sum(_ceil_pow2(n * (_type_information(t, strategy) + slack)) for t in types)
    _check_budget(total, n, budget_bytes, "general codebook")
    per = {t: _type_codebook(t, strategy, r_prime, n, seed, slack, budget_bytes) for t in types}
    return Codebook(np.zeros((0, n), dtype=np.uint8), np.zeros(0, dtype=int), 0, seed, per)


# ---------------------------------------------------------------------------
# Trial engine


def _draw_block(hyp: HypothesisPair, i: int, n: int, seed: int, block: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    m = hyp.joint(i).mass
    ny = m.shape[1]
    rng = _rng(seed, STREAM_DATA, i, n, block)
    flat = rng.choice(m.size, size=(size, n), p=m.ravel())
    return (flat // ny).astype(np.uint8), (flat % ny).astype(np.uint8)


def _first_typical(words: np.ndarray, seqs: np.ndarray, nu: int, nx: int, test) -> np.ndarray:
    """Index of the first codeword passing ``test(counts[m, t, u, x])`` for each sequence, or -1."""
    first = np.full(seqs.shape[0], -1, dtype=np.int64)
    pending = np.arange(seqs.shape[0])
    for start in range(0, words.shape[0], SCAN_CHUNK):
        if pending.size == 0:
            break
        chunk = words[start : start + SCAN_CHUNK]
        ok = test(batch_pair_counts(chunk, seqs[pending], nu, nx))
        hit = ok.any(axis=0)
        first[pending[hit]] = start + np.argmax(ok[:, hit], axis=0)
        pending = pending[~hit]
    return first


def _cond(joint: np.ndarray) -> np.ndarray:
    pa = joint.sum(axis=1, keepdims=True)
    return np.divide(joint, pa, out=np.zeros_like(joint), where=pa > 0)


def _joint_test(p_ab: np.ndarray, n: int, delta: float):
    pc = _cond(p_ab)
    return lambda counts: conditional_box_typical(counts, n, pc, delta, ref_joint=p_ab)


def _reconstruction_maps(p_uvxy: np.ndarray, dmat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    costs = np.einsum("uvxy,xz->uvyz", p_uvxy, dmat)
    return np.argmin(costs, axis=-1), np.argmin(costs.sum(axis=1), axis=-1)


class _VStage:
    """Binned V layer: encoder picks the first jointly typical v, decoder seeks a unique one in the bin."""

    def __init__(self, p_uvxy: np.ndarray, rate_v: float, rate_bin: float, n: int, seed: int, delta: float, dmat: np.ndarray, budget: int):
        nu, nv, nx, ny = p_uvxy.shape
        self.nu, self.nv, self.nx, self.ny = nu, nv, nx, ny
        self.n, self.seed, self.delta = n, seed, delta
        self.size = _ceil_pow2(n * rate_v)
        self.n_bins = _ceil_pow2(n * rate_bin)
        _check_budget(self.size, n, budget, "V codebook")
        p_uv = p_uvxy.sum(axis=(2, 3))
        self.q_v_given_u = _cond(p_uv)
        self.enc_test = _joint_test(p_uvxy.sum(axis=3).reshape(nu * nv, nx), n, delta)
        self.dec_test = _joint_test(p_uvxy.sum(axis=2).reshape(nu * nv, ny), n, delta)
        self.g, self.g_fallback = _reconstruction_maps(p_uvxy, dmat)
        self.dmat = dmat
        self.cache: dict = {}

    def book(self, key: tuple, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if key not in self.cache:
            rng = _rng(self.seed, STREAM_V, self.n, *key)
            words = _conditional_draws(self.q_v_given_u, u, self.size, self.delta, rng)
            self.cache[key] = (words, _random_bins(self.size, self.n_bins, rng))
        return self.cache[key]

    def distortion(self, key: tuple, u: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        words, bins = self.book(key, u)
        merged = u[None, :].astype(np.int64) * self.nv + words
        s2 = _first_typical(merged, x[None, :], self.nu * self.nv, self.nx, self.enc_test)[0]
        xhat = self.g_fallback[u, y]
        if s2 >= 0:
            members = np.flatnonzero(bins == bins[s2])
            ok = self.dec_test(batch_pair_counts(merged[members], y[None, :], self.nu * self.nv, self.ny))[:, 0]
            if ok.sum() == 1:
                v = words[members[np.argmax(ok)]]
                xhat = self.g[u, v, y]
        return float(self.dmat[x, xhat].mean())


class _TaiScheme:
    name = "tai"

    def __init__(self, cfg: SimConfig):
        if cfg.q_v_given_x is None or cfg.q_u_given_v is None:
            raise ValueError("testing against independence needs q_v_given_x and q_u_given_v")
        h0 = cfg.hyp.h0.mass
        w, q = cfg.q_v_given_x.rows, cfg.q_u_given_v.rows
        self.p = np.einsum("vu,xv,xy->uvxy", q, w, h0)
        nu, nv, nx, ny = self.p.shape
        self.nu, self.nx, self.ny = nu, nx, ny
        self.cfg = cfg
        q_u = Dist.from_array(self.p.sum(axis=(1, 2, 3)))
        self.book = build_tai_codebook(
            q_u, Channel.from_array(_cond(self.p.sum(axis=(2, 3)))), (cfg.rate_u, cfg.rate_v, cfg.rate_bin), cfg.n, cfg.seed,
            delta=cfg.delta_typ, budget_bytes=cfg.budget_bytes,
        )
        self.enc_test = _joint_test(self.p.sum(axis=(1, 3)), cfg.n, cfg.delta_typ)
        self.dec_test = _joint_test(self.p.sum(axis=(1, 2)), cfg.n, cfg.delta_typ)
        self.markov_test = _joint_test(self.p.sum(axis=1).reshape(nu * nx, ny), cfg.n, cfg.delta_typ)
        self.vstage = None
        if cfg.distortion is not None:
            self.vstage = _VStage(self.p, cfg.rate_v, cfg.rate_bin, cfg.n, cfg.seed, cfg.delta_typ, cfg.distortion.matrix, cfg.budget_bytes)

    def run_block(self, i: int, block: int, size: int) -> dict:
        cfg = self.cfg
        x, y = _draw_block(cfg.hyp, i, cfg.n, cfg.seed, block, size)
        words = self.book.codewords
        s1 = _first_typical(words, x, self.nu, self.nx, self.enc_test)
        enc_ok = s1 >= 0
        out = dict.fromkeys(_COUNT_FIELDS, 0)
        out[f"encoder_errors_h{i}"] = int((~enc_ok).sum())
        idx = np.flatnonzero(enc_ok)
        u = words[s1[idx]]
        uy = pair_counts(u, y[idx], self.nu, self.ny)
        accept = self.dec_test(uy)
        out[f"accepted_h{i}"] = int(accept.sum())
        if i == 0 and idx.size:
            merged = u.astype(np.int64) * self.nx + x[idx]
            c = pair_counts(merged, y[idx], self.nu * self.nx, self.ny)
            out["markov_typical"] = int(self.markov_test(c).sum())
            out["markov_total"] = int(idx.size)
        if self.vstage is not None:
            tag = "correct" if i == 0 else "incorrect"
            for k in idx[accept]:
                d = self.vstage.distortion((int(s1[k]),), words[s1[k]], x[k], y[k])
                out[f"distortion_sum_{tag}"] += d
                out[f"distortion_count_{tag}"] += 1
        return out


class _GeneralScheme:
    def __init__(self, cfg: SimConfig, decoder: str):
        if cfg.strategy is None:
            raise ValueError("the general schemes need a strategy channel")
        self.cfg = cfg
        self.decoder = decoder
        self.name = decoder
        w = cfg.strategy.rows
        self.nx, self.nu = w.shape
        self.ny = cfg.hyp.h0.shape[1]
        self.p_x = cfg.hyp.p_x
        self.w = w
        self.p0_uy = np.einsum("xy,xu->uy", cfg.hyp.h0.mass, w)
        self.dec_test = _joint_test(self.p0_uy, cfg.n, cfg.delta_typ)
        self.books: dict = {}
        self.vstage = None
        if decoder == "prop3" and cfg.distortion is not None and cfg.q_v_given_x is not None:
            p = np.einsum("xy,xu,xv->uvxy", cfg.hyp.h0.mass, w, cfg.q_v_given_x.rows)
            self.vstage = _VStage(p, cfg.rate_v, cfg.rate_bin, cfg.n, cfg.seed, cfg.delta_typ, cfg.distortion.matrix, cfg.budget_bytes)

    def sub(self, t: tuple) -> Codebook:
        if t not in self.books:
            c = self.cfg
            self.books[t] = _type_codebook(t, c.strategy, c.r_prime, c.n, c.seed, c.codebook_slack, c.budget_bytes)
        return self.books[t]

    def run_block(self, i: int, block: int, size: int) -> dict:
        cfg = self.cfg
        n = cfg.n
        x, y = _draw_block(cfg.hyp, i, n, cfg.seed, block, size)
        out = dict.fromkeys(_COUNT_FIELDS, 0)
        x_counts = np.stack([(x == a).sum(axis=1) for a in range(self.nx)], axis=1)
        x_ok = box_typical(x_counts, n, self.p_x, cfg.delta_typ)
        test = lambda c: conditional_box_typical(c.transpose(0, 1, 3, 2), n, self.w, cfg.delta_typ)
        errors = int((~x_ok).sum())
        for t in sorted({tuple(r) for r in x_counts[x_ok].tolist()}):
            rows = np.flatnonzero(x_ok & np.all(x_counts == t, axis=1))
            book = self.sub(t)
            s = _first_typical(book.codewords, x[rows], self.nu, self.nx, test)
            errors += int((s < 0).sum())
            for k, sk in zip(rows[s >= 0], s[s >= 0]):
                members = book.bin_members(book.bin_of[sk])
                cw = book.codewords[members]
                c = batch_pair_counts(cw, y[k][None, :], self.nu, self.ny)[:, 0]
                if self.decoder == "prop4":
                    accept = bool(self.dec_test(c).any())
                else:
                    h = _cond_entropy_counts(c, n)
                    pick = int(np.flatnonzero(h <= h.min() + 1e-12)[0])
                    accept = bool(self.dec_test(c[pick][None])[0])
                    if accept and self.vstage is not None:
                        tag = "correct" if i == 0 else "incorrect"
                        uhat = cw[pick]
                        d = self.vstage.distortion((*t, int(members[pick])), uhat, x[k], y[k])
                        out[f"distortion_sum_{tag}"] += d
                        out[f"distortion_count_{tag}"] += 1
                out[f"accepted_h{i}"] += int(accept)
        out[f"encoder_errors_h{i}"] = errors
        return out


def _cond_entropy_counts(c: np.ndarray, n: int) -> np.ndarray:
    """H(u | y) from pair counts ``[m, u, y]``."""
    p = c / n
    py = p.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        hj = -np.sum(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0), axis=(1, 2))
        hy = -np.sum(np.where(py > 0, py * np.log2(np.where(py > 0, py, 1.0)), 0.0), axis=1)
    return np.maximum(hj - hy, 0.0)


_WORKER_SCHEME = None


def _make_scheme(cfg: SimConfig, name: str):
    return _TaiScheme(cfg) if name == "tai" else _GeneralScheme(cfg, name)


def _worker_init(cfg: SimConfig, name: str) -> None:
    global _WORKER_SCHEME
    _WORKER_SCHEME = _make_scheme(cfg, name)


def _worker_run(job: tuple) -> dict:
    return _WORKER_SCHEME.run_block(*job)


def _run(cfg: SimConfig, name: str) -> SimResult:
    jobs = []
    for i in (0, 1):
        for b in range(0, cfg.trials, cfg.block):
            jobs.append((i, b // cfg.block, min(cfg.block, cfg.trials - b)))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers, initializer=_worker_init, initargs=(cfg, name)) as ex:
            parts = list(ex.map(_worker_run, jobs))
    else:
        scheme = _make_scheme(cfg, name)
        parts = [scheme.run_block(*j) for j in jobs]
    total = dict.fromkeys(_COUNT_FIELDS, 0)
    # Sum in job order so floating totals do not depend on scheduling.
    for p in parts:
        for k in _COUNT_FIELDS:
            total[k] += p[k]
    d_max = cfg.distortion.d_max if cfg.distortion is not None else None
    return SimResult(name, cfg.n, cfg.trials, cfg.trials, d_max=d_max, **total)


def simulate_tai(config: SimConfig) -> SimResult:
    return _run(config, "tai")


def simulate_prop3(config: SimConfig) -> SimResult:
    return _run(config, "prop3")


def simulate_prop4(config: SimConfig) -> SimResult:
    return _run(config, "prop4")


def sweep(simulate, config: SimConfig, ns) -> SweepResult:
    """Run ``simulate`` at each block length and fit the exponent slope."""
    results = tuple(simulate(config.with_n(int(n))) for n in ns)
    slope, se = exponent_slope([r.n for r in results], [r.beta_hat for r in results], [r.trials_h1 for r in results])
    return SweepResult(tuple(int(n) for n in ns), results, slope, se)
