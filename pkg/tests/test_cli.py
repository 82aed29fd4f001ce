import io
import json

import numpy as np
import pandas as pd
import pytest

from unbiased_iv.cli import main


def run(args):
    out, err = io.StringIO(), io.StringIO()
    code = main(args, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def write_data(path, rng, t=2000, k=3, pi=0.5, beta=1.0, noise=1.0):
    z = rng.standard_normal((t, k))
    u, v = rng.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]], t).T * noise
    x = z @ np.full(k, pi) + v
    y = beta * x + u
    df = pd.DataFrame({"y": y, "x": x, **{f"z{i + 1}": z[:, i] for i in range(k)}})
    df.to_csv(path, index=False)


def test_noiseless_single_instrument(tmp_path):
    rng = np.random.default_rng(0)
    z = rng.standard_normal(500)
    p = tmp_path / "d.csv"
    pd.DataFrame({"y": 2 * z * 0.8, "x": z * 0.8, "z1": z}).to_csv(p, index=False)
    code, out, err = run(["estimate", "--input", str(p), "--out", str(tmp_path / "r.json")])
    assert code == 0, err
    rep = json.loads((tmp_path / "r.json").read_text())
    assert abs(rep["beta_u"] - 2) < 1e-6
    assert abs(rep["beta_2sls"] - 2) < 1e-6
    assert "AR set" in out


def test_strong_multi_instrument(tmp_path):
    rng = np.random.default_rng(1)
    p = tmp_path / "d.csv"
    write_data(p, rng, t=10_000, pi=0.5)
    code, out, err = run(["estimate", "--input", str(p), "--out", str(tmp_path / "r.json"), "--c", "0.5"])
    assert code == 0, err
    rep = json.loads((tmp_path / "r.json").read_text())
    se_2sls = np.sqrt(1.0 / (10_000 * 0.75))  # rough IV standard error for this design
    assert abs(rep["beta_rb_c"] - rep["beta_2sls"]) <= 4 * max(rep["beta_rb_c_mc_se"], 0.1 * se_2sls)
    assert rep["zeta_draws"] == 100_000


def test_estimate_is_deterministic(tmp_path):
    rng = np.random.default_rng(2)
    p = tmp_path / "d.csv"
    write_data(p, rng, pi=0.1)
    a = run(["estimate", "--input", str(p), "--seed", "4", "--zeta-draws", "5000"])
    b = run(["estimate", "--input", str(p), "--seed", "4", "--zeta-draws", "5000"])
    assert a == b and a[0] == 0


def test_weight_options(tmp_path):
    rng = np.random.default_rng(3)
    p = tmp_path / "d.csv"
    write_data(p, rng, pi=0.3)
    for w in ("zgram", "gmm2", "fixed:0.2,0.3,0.5"):
        code, _, err = run(["estimate", "--input", str(p), "--weight", w, "--zeta-draws", "2000"])
        assert code == 0, err
    code, _, err = run(["estimate", "--input", str(p), "--weight", "fixed:0.5,0.5"])
    assert code == 2


def test_input_errors(tmp_path):
    p = tmp_path / "d.csv"
    pd.DataFrame({"y": [1.0, 2.0], "x": [1.0, 2.0]}).to_csv(p, index=False)
    code, _, err = run(["estimate", "--input", str(p)])
    assert code == 2 and "z1" in err
    code, _, err = run(["estimate", "--input", str(tmp_path / "missing.csv")])
    assert code == 2
    rng = np.random.default_rng(4)
    write_data(p, rng)
    code, _, err = run(["estimate", "--input", str(p), "--c", "1.0"])
    assert code == 2 and "--c" in err
    code, _, _ = run(["estimate"])
    assert code == 2
    code, _, err = run(["estimate", "--input", str(p), "--cluster-col", "firm"])
    assert code == 2 and "firm" in err


def test_numerical_error_exit(tmp_path):
    p = tmp_path / "d.csv"
    z = np.arange(20.0)
    pd.DataFrame({"y": z, "x": z, "z1": z, "z2": 2 * z}).to_csv(p, index=False)
    code, _, err = run(["estimate", "--input", str(p)])
    assert code == 3, err


def test_simulate_smoke_and_determinism(tmp_path):
    import time

    args = ["simulate", "--pi", "1", "--sigma12", "0.5", "--draws", "1000", "--seed", "3"]
    t0 = time.perf_counter()
    code, _, err = run(args + ["--out", str(tmp_path / "a")])
    assert code == 0, err
    assert time.perf_counter() - t0 < 5
    run(args + ["--out", str(tmp_path / "b")])
    for name in ("results.csv", "manifest.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "results.csv").read_text().splitlines()
    assert lines[0].startswith("#schema=")
    df = pd.read_csv(tmp_path / "a" / "results.csv", comment="#")
    assert len(df) == 3 and set(df.estimator) == {"beta_u", "2sls", "fuller"}
    assert df.notna().any().all()


def test_grid_rows(tmp_path):
    code, _, err = run(["grid", "--pi", "0.5,2", "--sigma12", "0,0.7", "--draws", "500", "--out", str(tmp_path)])
    assert code == 0, err
    df = pd.read_csv(tmp_path / "results.csv", comment="#")
    assert len(df) == 2 * 2 * 3


def test_simulate_multi(tmp_path):
    code, _, err = run(["simulate", "--design", "multi", "--expected-f", "5", "--draws", "300",
                        "--zeta-draws", "50", "--out", str(tmp_path)])
    assert code == 0, err
    df = pd.read_csv(tmp_path / "results.csv", comment="#")
    assert set(df.estimator) >= {"rb", "rb_c", "2sls", "oracle"}


def test_bound_single_point(tmp_path):
    code, _, err = run(["bound", "--design", "single", "--pi", "1", "--sigma12", "0.5",
                        "--draws", "50000", "--out", str(tmp_path)])
    assert code == 0, err
    df = pd.read_csv(tmp_path / "bound.csv", comment="#")
    r = df.iloc[0]
    assert r.estimator == "beta_u"
    assert abs(r["bound"] - r["mad"]) <= 4 * np.hypot(r["bound_se"], r["mad_se"])
    man = [json.loads(l) for l in (tmp_path / "manifest.jsonl").read_text().splitlines()]
    assert man[0]["seed"] == 0 and man[0]["draws"] == 50000
    assert man[1]["pi_star"] == [1.0]


def test_bound_multi(tmp_path):
    code, _, err = run(["bound", "--expected-f", "3,10", "--draws", "4000", "--zeta-draws", "100",
                        "--out", str(tmp_path)])
    assert code == 0, err
    df = pd.read_csv(tmp_path / "bound.csv", comment="#")
    for _, r in df.iterrows():
        assert r["bound"] <= r["mad"] + 4 * np.hypot(r["bound_se"], r["mad_se"])


def test_bound_from_data(tmp_path):
    rng = np.random.default_rng(5)
    p = tmp_path / "d.csv"
    write_data(p, rng, pi=-0.05)
    code, _, err = run(["bound", "--input", str(p), "--first-stage-sign", "-1", "--expected-f", "3",
                        "--draws", "2000", "--zeta-draws", "50", "--out", str(tmp_path / "o")])
    assert code == 0, err
    man = [json.loads(l) for l in (tmp_path / "o" / "manifest.jsonl").read_text().splitlines()]
    assert all(v > 0 for v in man[1]["pi_star"])


def test_missing_out_is_usage_error():
    code, _, err = run(["simulate"])
    assert code == 2
