"""Command-line front end: figure data, region tables, projections and simulation reports.

Usage::

    lossydetect <command> [--config FILE] [--param KEY=VALUE ...] [--out PATH]
                [--seed N] [--grid-step S] [--precision P] [--workers W]

CSV outputs start with ``#`` metadata lines (tool version, config hash,
seed) followed by a header row.  JSON outputs carry the same metadata
under ``"meta"``.  Exit codes: 0 success, 2 config error, 3 infeasible
request, 4 budget overflow, 5 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .iproject import CouplingConstraints, EmptyCouplingSet, NonConvergence, min_kl_over_coupling_set
from .prob import Channel, Joint, binary_entropy, bsc
from .region_general import (
    BinningSearch,
    GridBudgetExceeded,
    HypothesisPair,
    StrategySearch,
    exponent_prop3,
    exponent_prop4,
    fig3_table,
    nonbinned_baseline,
    stein_bound,
)
from .region_tai import (
    BssParams,
    DistortionMeasure,
    FrontierBudgetExceeded,
    GRID_STEP,
    FrontierConfig,
    Infeasible,
    bss_joint,
    bss_min_distortion,
    bss_region_point,
    eval_tai_point,
    optimize_tai_frontier,
    wz_binary_rate,
)
from .sim import BudgetError, SimConfig, simulate_prop3, simulate_prop4, simulate_tai, sweep

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4, 5

COMMANDS = ("fig2", "fig3", "tai-point", "tai-frontier", "wz", "iproject", "exponent", "simulate")

DEFAULTS = {
    "fig2": {"p": 0.25, "rates": [0.1, 0.3, 0.5, 0.7, 0.9, 1.0], "exponent_max": 0.25},
    "fig3": {"p": 0.1, "q": 0.2, "rate": 0.4},
    "tai-point": {
        "p": None, "alpha": None, "beta": None, "theta": None,
        "p_xy": None, "q_v_given_x": None, "q_u_given_v": None, "distortion": None,
    },
    "tai-frontier": {
        "p": 0.25, "p_xy": None, "distortion": None, "rates": [0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
        "n_exponents": 8, "targets": [], "u_size": None, "v_size": None, "starts": 3,
        "max_evals": 5_000_000,
    },
    "wz": {"p": 0.25, "distortion_max": 0.25},
    "iproject": {"target": None, "q_ux": None, "q_uy": None, "max_iter": 10_000},
    "exponent": {"p": 0.1, "q": 0.2, "h0": None, "h1": None, "rate": 0.4, "scheme": "all", "testing_mode": "lower_bound"},
    "simulate": {
        "scheme": "tai", "p": 0.25, "q": 0.5, "h0": None, "h1": None, "n": 16, "ns": None, "trials": 1000,
        "delta_typ": 0.05, "q_v_given_x": None, "q_u_given_v": None, "v_delta": None, "u_delta": None,
        "rate_u": 0.0, "rate_v": 0.0, "rate_bin": 0.0, "strategy": None, "strategy_delta": None,
        "r_prime": 0.0, "codebook_slack": 0.0, "distortion": None, "block": 256, "budget_bytes": 1 << 30,
    },
}

GRID_DEFAULTS = {"fig2": 1.0 / 512, "fig3": 1.0 / 512, "wz": 1.0 / 256}


class ConfigError(ValueError):
    pass


class InfeasibleRequest(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict
    out: str | None = None
    seed: int = 0
    grid_step: float | None = None
    precision: int = 6
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        unknown = sorted(set(self.params) - set(DEFAULTS[self.command]))
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.command}: {', '.join(unknown)}")
        if not 0 <= self.precision <= 17:
            raise ConfigError("precision must lie in [0, 17]")
        if self.grid_step is not None and not 0 < self.grid_step <= 0.5:
            raise ConfigError("grid step must lie in (0, 0.5]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def resolved(self) -> dict:
        p = dict(DEFAULTS[self.command])
        p.update(self.params)
        return p

    @property
    def step(self) -> float | None:
        return self.grid_step if self.grid_step is not None else GRID_DEFAULTS.get(self.command)

    def digest(self) -> str:
        doc = {"command": self.command, "params": self.resolved(), "seed": self.seed, "grid_step": self.step, "precision": self.precision}
        return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def meta(self) -> dict:
        return {"tool": "lossydetect", "version": __version__, "command": self.command, "config_sha256": self.digest(), "seed": self.seed}


# ---------------------------------------------------------------------------
# Parameter helpers


def _num(p: dict, key: str, lo: float | None = None, hi: float | None = None, *, open_lo=False, open_hi=False) -> float:
    v = p.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"parameter {key} must be a finite number, got {v!r}")
    v = float(v)
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(f"parameter {key}={v} below its range")
    if hi is not None and (v > hi or (open_hi and v == hi)):
        raise ConfigError(f"parameter {key}={v} above its range")
    return v


def _int(p: dict, key: str, lo: int = 1) -> int:
    v = p.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"parameter {key} must be an integer >= {lo}, got {v!r}")
    return v


def _array(p: dict, key: str, ndim: int) -> np.ndarray:
    try:
        a = np.asarray(p[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key} is not a numeric array") from exc
    if a.ndim != ndim or not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ConfigError(f"parameter {key} must be a nonnegative {ndim}-d array")
    return a


def _joint(p: dict, key: str, roles) -> Joint:
    try:
        return Joint.from_array(_array(p, key, len(roles)), roles)
    except ValueError as exc:
        raise ConfigError(f"parameter {key}: {exc}") from exc


def _channel(p: dict, key: str) -> Channel:
    try:
        return Channel.from_array(_array(p, key, 2))
    except ValueError as exc:
        raise ConfigError(f"parameter {key}: {exc}") from exc


def _distortion(p: dict, size: int) -> DistortionMeasure:
    if p.get("distortion") is None:
        return DistortionMeasure.hamming(size)
    try:
        return DistortionMeasure(_array(p, "distortion", 2))
    except ValueError as exc:
        raise ConfigError(f"parameter distortion: {exc}") from exc


def _rates(p: dict, key: str = "rates") -> list[float]:
    v = p.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"parameter {key} must be a nonempty list")
    return [_num({key: r}, key, 0.0) for r in v]


def _hyp(p: dict) -> HypothesisPair:
    try:
        if p.get("h0") is not None or p.get("h1") is not None:
            return HypothesisPair(_joint(p, "h0", ("X", "Y")), _joint(p, "h1", ("X", "Y")))
        return HypothesisPair.bss(_num(p, "p", 0.0, 0.5), _num(p, "q", 0.0, 0.5))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _grid(stop: float, step: float) -> np.ndarray:
    k = int(math.floor(stop / step + 1e-9))
    return np.arange(k + 1) * step


# ---------------------------------------------------------------------------
# Output formatting


class Table:
    def __init__(self, columns: list[str]):
        self.columns = columns
        self.rows: list[list] = []

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row width does not match header")
        self.rows.append(list(values))


def _cell(v, precision: int) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return "absent"
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = f"{v:.{precision}f}"
    return "0." + "0" * precision if s == "-0." + "0" * precision else s


def render_csv(cfg: RunConfig, table: Table) -> str:
    buf = io.StringIO()
    for k, v in cfg.meta().items():
        buf.write(f"# {k}: {v}\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(_cell(v, cfg.precision) for v in row) + "\n")
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def render_json(cfg: RunConfig, body: dict) -> str:
    doc = {"meta": cfg.meta(), "params": cfg.resolved(), **body}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_atomic(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Commands


def cmd_fig2(cfg: RunConfig) -> str:
    p = cfg.resolved()
    pp = _num(p, "p", 0.0, 0.5, open_lo=True, open_hi=True)
    rates = _rates(p)
    e_top = _num(p, "exponent_max", 0.0)
    e_cap = 1.0 - binary_entropy(pp)
    table = Table(["rate", "exponent", "min_distortion"])
    for r in rates:
        grid = _grid(e_top, cfg.step)
        if r < e_cap and r <= e_top:
            # a curve below I(X;Y) ends at exponent = rate
            grid = np.union1d(grid, [r])
        for e in grid:
            try:
                d = bss_min_distortion(r, float(e), pp, step=min(cfg.step, GRID_STEP))
            except Infeasible:
                d = "infeasible"
            table.add(r, float(e), d)
    return render_csv(cfg, table)


def cmd_fig3(cfg: RunConfig) -> str:
    p = cfg.resolved()
    pp = _num(p, "p", 0.0, 0.5)
    qq = _num(p, "q", 0.0, 0.5)
    if not pp < qq:
        raise ConfigError("fig3 requires p < q")
    rate = _num(p, "rate", 0.0)
    deltas = _grid(0.5, cfg.step)
    if deltas[-1] < 0.5 - 1e-12:
        deltas = np.append(deltas, 0.5)
    t = fig3_table(pp, qq, rate, deltas)
    table = Table(["delta", "testing", "G", "G_hat", "overall_prop3", "overall_prop4", "nonbinned_baseline", "stein"])
    for row in t.rows:
        table.add(row.delta, row.testing_exponent, row.g_exponent, row.g_hat_exponent, row.overall_prop3, row.overall_prop4, t.nonbinned, t.stein)
    return render_csv(cfg, table)


def cmd_tai_point(cfg: RunConfig) -> str:
    p = cfg.resolved()
    if p.get("alpha") is not None:
        try:
            pt = bss_region_point(BssParams(_num(p, "alpha"), _num(p, "beta"), _num(p, "theta"), _num(p, "p")))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        for k in ("p_xy", "q_v_given_x", "q_u_given_v"):
            if p.get(k) is None:
                raise ConfigError(f"tai-point needs either alpha/beta/theta/p or {k}")
        p_xy = _joint(p, "p_xy", ("X", "Y"))
        try:
            pt = eval_tai_point(p_xy, _channel(p, "q_v_given_x"), _channel(p, "q_u_given_v"), _distortion(p, p_xy.shape[0]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    table = Table(["rate", "exponent", "distortion"])
    table.add(pt.rate, pt.exponent, pt.distortion)
    return render_csv(cfg, table)


def cmd_tai_frontier(cfg: RunConfig) -> str:
    p = cfg.resolved()
    p_xy = _joint(p, "p_xy", ("X", "Y")) if p.get("p_xy") is not None else bss_joint(_num(p, "p", 0.0, 0.5, open_lo=True, open_hi=True))
    targets = p.get("targets") or []
    if not isinstance(targets, list) or any(not isinstance(t, list) or len(t) != 2 for t in targets):
        raise ConfigError("targets must be a list of [rate, exponent] pairs")
    grid = FrontierConfig(
        rates=tuple(_rates(p)),
        n_exponents=_int(p, "n_exponents"),
        targets=tuple((float(r), float(e)) for r, e in targets),
        u_size=p.get("u_size"),
        v_size=p.get("v_size"),
        starts=_int(p, "starts"),
        max_evals=_int(p, "max_evals"),
        seed=cfg.seed,
    )
    try:
        pts = optimize_tai_frontier(p_xy, _distortion(p, p_xy.shape[0]), grid)
    except FrontierBudgetExceeded as exc:
        raise BudgetError(str(exc), 0) from exc
    table = Table(["rate", "exponent", "distortion"])
    for t in pts:
        table.add(t.rate, t.exponent, t.distortion)
    return render_csv(cfg, table)


def cmd_wz(cfg: RunConfig) -> str:
    p = cfg.resolved()
    pp = _num(p, "p", 0.0, 0.5, open_lo=True, open_hi=True)
    top = min(_num(p, "distortion_max", 0.0), pp)
    table = Table(["distortion", "rate"])
    for d in _grid(top, cfg.step):
        table.add(float(d), wz_binary_rate(float(d), pp))
    return render_csv(cfg, table)


def cmd_iproject(cfg: RunConfig) -> str:
    p = cfg.resolved()
    for k in ("target", "q_ux", "q_uy"):
        if p.get(k) is None:
            raise ConfigError(f"iproject needs parameter {k}")
    target = _joint(p, "target", ("U", "X", "Y"))
    try:
        cons = CouplingConstraints(_joint(p, "q_ux", ("U", "X")), _joint(p, "q_uy", ("U", "Y")))
    except EmptyCouplingSet as exc:
        raise InfeasibleRequest(str(exc)) from exc
    res = min_kl_over_coupling_set(target, cons, max_iter=_int(p, "max_iter"), seed=cfg.seed)
    body = {
        "value": round(res.value, cfg.precision) if res.feasible else res.value,
        "iterations": res.iterations,
        "gap": res.gap,
        "converged": res.converged,
        "argmin": None if res.argmin is None else np.round(res.argmin.mass, cfg.precision),
    }
    return render_json(cfg, body)


def cmd_exponent(cfg: RunConfig) -> str:
    p = cfg.resolved()
    hyp = _hyp(p)
    rate = _num(p, "rate", 0.0)
    scheme = p.get("scheme")
    if scheme not in ("prop3", "prop4", "nonbinned", "stein", "all"):
        raise ConfigError("scheme must be one of prop3, prop4, nonbinned, stein, all")
    mode = p.get("testing_mode")
    if mode not in ("lower_bound", "exact"):
        raise ConfigError("testing_mode must be lower_bound or exact")
    search = StrategySearch(delta_step=cfg.grid_step or 1.0 / 512, testing_mode=mode, binning=BinningSearch())
    body = {}

    def strat(s):
        return getattr(s, "delta", None) if not isinstance(s, Channel) else s.rows

    if scheme in ("prop3", "all"):
        v, s = exponent_prop3(rate, hyp, search)
        body["prop3"] = {"exponent": round(v, cfg.precision), "strategy": strat(s)}
    if scheme in ("prop4", "all"):
        v, s = exponent_prop4(rate, hyp, search)
        body["prop4"] = {"exponent": round(v, cfg.precision), "strategy": strat(s)}
    if scheme in ("nonbinned", "all"):
        body["nonbinned"] = {"exponent": round(nonbinned_baseline(rate, hyp, search), cfg.precision)}
    if scheme in ("stein", "all"):
        body["stein"] = {"exponent": round(stein_bound(hyp), cfg.precision)}
    return render_json(cfg, body)


def _sim_config(cfg: RunConfig) -> tuple[SimConfig, str, list[int] | None]:
    p = cfg.resolved()
    scheme = p.get("scheme")
    if scheme not in ("tai", "prop3", "prop4"):
        raise ConfigError("scheme must be tai, prop3 or prop4")
    hyp = _hyp(p)
    nx = hyp.h0.shape[0]
    ns = p.get("ns")
    if ns is not None:
        if not isinstance(ns, list) or len(ns) < 2:
            raise ConfigError("ns must be a list of at least two block lengths")
        ns = [_int({"ns": n}, "ns") for n in ns]
    kw = dict(
        n=_int(p, "n"),
        trials=_int(p, "trials"),
        hyp=hyp,
        delta_typ=_num(p, "delta_typ", 0.0, open_lo=True),
        seed=cfg.seed,
        rate_u=_num(p, "rate_u", 0.0),
        rate_v=_num(p, "rate_v", 0.0),
        rate_bin=_num(p, "rate_bin", 0.0),
        r_prime=_num(p, "r_prime", 0.0),
        codebook_slack=_num(p, "codebook_slack", 0.0),
        block=_int(p, "block"),
        budget_bytes=_int(p, "budget_bytes"),
        workers=cfg.workers,
    )
    if p.get("q_v_given_x") is not None:
        kw["q_v_given_x"] = _channel(p, "q_v_given_x")
    elif p.get("v_delta") is not None:
        kw["q_v_given_x"] = bsc(_num(p, "v_delta", 0.0, 0.5))
    if p.get("q_u_given_v") is not None:
        kw["q_u_given_v"] = _channel(p, "q_u_given_v")
    elif p.get("u_delta") is not None:
        kw["q_u_given_v"] = bsc(_num(p, "u_delta", 0.0, 0.5))
    if p.get("strategy") is not None:
        kw["strategy"] = _channel(p, "strategy")
    elif p.get("strategy_delta") is not None:
        kw["strategy"] = bsc(_num(p, "strategy_delta", 0.0, 0.5))
    if scheme == "tai":
        if kw.get("q_v_given_x") is None or kw.get("q_u_given_v") is None:
            raise ConfigError("tai simulation needs q_v_given_x (or v_delta) and q_u_given_v (or u_delta)")
        kw["distortion"] = _distortion(p, nx)
    else:
        if kw.get("strategy") is None:
            raise ConfigError(f"{scheme} simulation needs strategy or strategy_delta")
        if p.get("distortion") is not None:
            kw["distortion"] = _distortion(p, nx)
    try:
        return SimConfig(**kw), scheme, ns
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


SIMULATORS = {"tai": simulate_tai, "prop3": simulate_prop3, "prop4": simulate_prop4}


def cmd_simulate(cfg: RunConfig) -> str:
    sim_cfg, scheme, ns = _sim_config(cfg)
    fn = SIMULATORS[scheme]
    body = {"sim_config": sim_cfg.to_dict(), "scheme": scheme}
    if ns:
        body["sweep"] = sweep(fn, sim_cfg, ns).to_dict()
    else:
        body["result"] = fn(sim_cfg).to_dict()
    return render_json(cfg, body)


HANDLERS = {
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "tai-point": cmd_tai_point,
    "tai-frontier": cmd_tai_frontier,
    "wz": cmd_wz,
    "iproject": cmd_iproject,
    "exponent": cmd_exponent,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------------------
# Entry point


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lossydetect", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", help=f"one of {', '.join(COMMANDS)}")
    ap.add_argument("--config", help="JSON file with parameters; may also hold seed, grid_step, precision, out")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="override one parameter (value parsed as JSON when possible)")
    ap.add_argument("--out", help="output path (default: stdout)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--grid-step", type=float)
    ap.add_argument("--precision", type=int)
    ap.add_argument("--workers", type=int, default=1, help="worker processes for simulation; never changes results")
    return ap


def load_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    doc: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    params = dict(doc.get("params", {k: v for k, v in doc.items() if k not in ("seed", "grid_step", "precision", "out", "command")}))
    if doc.get("command") not in (None, args.command):
        raise ConfigError(f"config file is for command {doc['command']!r}")
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = _parse_value(v)
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    grid = args.grid_step if args.grid_step is not None else doc.get("grid_step")
    prec = args.precision if args.precision is not None else doc.get("precision", 6)
    out = args.out if args.out is not None else doc.get("out")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return RunConfig(args.command, params, out, seed, grid, prec, args.workers)


def run(cfg: RunConfig) -> int:
    """Execute one command and write its artifact; returns the exit status."""
    try:
        text = HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Infeasible, InfeasibleRequest, EmptyCouplingSet) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BudgetError, GridBudgetExceeded) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (NonConvergence, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_atomic(cfg.out, text)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = load_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
