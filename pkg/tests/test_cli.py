import csv
import io
import json

import numpy as np
import pytest

from lossydetect.cli import main
from lossydetect.prob import binary_entropy
from lossydetect.region_tai import Infeasible, bss_min_distortion


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def read_csv(path):
    lines = path.read_text().splitlines()
    meta = {l[2:].split(": ", 1)[0]: l[2:].split(": ", 1)[1] for l in lines if l.startswith("# ")}
    rows = list(csv.reader(io.StringIO("\n".join(l for l in lines if not l.startswith("#")))))
    return meta, rows[0], rows[1:]


def test_fig2_infeasible_cells_and_schema(tmp_path):
    code, out = run(tmp_path, "fig2", "--grid-step", "0.0625", "--param", "rates=[0.3,1.0]")
    assert code == 0
    meta, header, rows = read_csv(out)
    assert header == ["rate", "exponent", "min_distortion"]
    assert meta["tool"] == "lossydetect" and meta["seed"] == "0" and len(meta["config_sha256"]) == 64
    e_max = 1 - binary_entropy(0.25)
    for r, e, d in rows:
        assert len(e.split(".")[1]) == 6
        if float(e) > e_max or float(e) > float(r):
            assert d == "infeasible"
        else:
            assert float(d) >= 0


def test_fig2_rows_recomputable(tmp_path):
    code, out = run(tmp_path, "fig2", "--grid-step", "0.03125", "--precision", "9")
    _, _, rows = read_csv(out)
    rng = np.random.default_rng(0)
    for k in rng.choice(len(rows), size=8, replace=False):
        r, e, d = rows[k]
        try:
            v = bss_min_distortion(float(r), float(e), 0.25)
        except Infeasible:
            assert d == "infeasible"
            continue
        assert float(d) == pytest.approx(v, abs=1e-9)


def test_fig3_last_row(tmp_path):
    code, out = run(tmp_path, "fig3", "--grid-step", "0.125")
    assert code == 0
    _, header, rows = read_csv(out)
    assert header == ["delta", "testing", "G", "G_hat", "overall_prop3", "overall_prop4", "nonbinned_baseline", "stein"]
    last = dict(zip(header, rows[-1]))
    assert last["delta"] == "0.500000"
    assert float(last["testing"]) == 0 and float(last["overall_prop3"]) == 0 and float(last["overall_prop4"]) == 0
    assert last["G_hat"] == "0.400000"
    assert last["G"] == "inf"


def test_byte_identical_reruns(tmp_path):
    _, a = run(tmp_path, "wz", "--grid-step", "0.05", name="a")
    _, b = run(tmp_path, "wz", "--grid-step", "0.05", name="b")
    assert a.read_bytes() == b.read_bytes()


def test_simulate_report_independent_of_workers(tmp_path):
    args = ["simulate", "--seed", "3", "--param", "n=16", "--param", "trials=300", "--param", "v_delta=0.26",
            "--param", "u_delta=0", "--param", "rate_u=0.27", "--param", "delta_typ=0.1", "--param", "q=0.5"]
    code, a = run(tmp_path, *args, name="a")
    assert code == 0
    assert main([*args, "--workers", "2", "--out", str(tmp_path / "b")]) == 0
    assert a.read_bytes() == (tmp_path / "b").read_bytes()
    doc = json.loads(a.read_text())
    assert doc["meta"]["seed"] == 3
    assert doc["sim_config"]["n"] == 16 and doc["result"]["trials_h0"] == 300


def test_simulate_sweep(tmp_path):
    code, out = run(tmp_path, "simulate", "--param", "scheme=prop4", "--param", "p=0.1", "--param", "q=0.2",
                    "--param", "strategy_delta=0.0273", "--param", "r_prime=0.4", "--param", "ns=[6,8]",
                    "--param", "trials=100", "--param", "delta_typ=0.15")
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["sweep"]["ns"] == [6, 8]


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"p": 0.1, "distortion_max": 0.1}, "grid_step": 0.05, "precision": 4}))
    code, out = run(tmp_path, "wz", "--config", str(cfg), "--param", "p=0.2")
    assert code == 0
    _, _, rows = read_csv(out)
    assert rows[0] == ["0.0000", f"{binary_entropy(0.2):.4f}"]


def test_exponent_command(tmp_path):
    code, out = run(tmp_path, "exponent", "--param", "scheme=stein")
    assert code == 0
    assert json.loads(out.read_text())["stein"]["exponent"] == pytest.approx(0.052933, abs=1e-6)


def test_tai_point_and_iproject(tmp_path):
    code, out = run(tmp_path, "tai-point", "--param", "alpha=0", "--param", "beta=0", "--param", "theta=1", "--param", "p=0.25")
    assert code == 0
    _, _, rows = read_csv(out)
    assert rows[0] == ["1.000000", "0.188722", "0.000000"]
    t = np.full((2, 2, 2), 0.125).tolist()
    m = np.full((2, 2), 0.25).tolist()
    code, out = run(tmp_path, "iproject", "--param", f"target={json.dumps(t)}", "--param", f"q_ux={json.dumps(m)}", "--param", f"q_uy={json.dumps(m)}")
    assert code == 0 and json.loads(out.read_text())["value"] == 0.0


@pytest.mark.parametrize(
    "args,code",
    [
        (["nosuch"], 2),
        (["fig3", "--param", "zz=1"], 2),
        (["fig2", "--param", "p=0.7"], 2),
        (["fig3", "--param", "p=0.3"], 2),
        (["iproject"], 2),
        (["wz", "--grid-step", "0"], 2),
        (["fig2", "--param", "rates"], 2),
        (["iproject", "--param", "target=[[[0.25,0.25],[0.25,0.25]]]", "--param", "q_ux=[[0.5,0.5]]", "--param", "q_uy=[[0.5,0.5]]",
          "--param", "max_iter=0"], 2),
        (["iproject", "--param", "target=[[[0.125,0.125],[0.125,0.125]],[[0.125,0.125],[0.125,0.125]]]",
          "--param", "q_ux=[[0.3,0.2],[0.25,0.25]]", "--param", "q_uy=[[0.3,0.3],[0.2,0.2]]"], 3),
        (["simulate", "--param", "v_delta=0", "--param", "u_delta=0", "--param", "rate_u=1.0", "--param", "n=40",
          "--param", "budget_bytes=1000"], 4),
        (["iproject", "--param", "target=[[[0.1,0.2],[0.3,0.05]],[[0.05,0.1],[0.15,0.05]]]",
          "--param", "q_ux=[[0.2,0.3],[0.1,0.4]]", "--param", "q_uy=[[0.35,0.15],[0.25,0.25]]", "--param", "max_iter=1"], 5),
    ],
)
def test_exit_codes_and_no_partial_output(tmp_path, args, code):
    out = tmp_path / "never"
    assert main([*args, "--out", str(out)]) == code
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []
