import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from hypedyn.cli import main
from hypedyn.synthetic import generate_weekly_panel


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def frame(text):
    from io import StringIO

    return pd.read_csv(StringIO(text))


def test_simulate_decays(capsys):
    code, out, err = run(capsys, "simulate", "--alpha", "0.7", "--beta", "1", "--lambda", "1", "--capacity", "0.3",
                         "--phi0", "0", "--r0", "0.5", "--steps", "2000")
    assert code == 0
    traj = frame(out)
    assert len(traj) == 2001 and abs(traj["r"].iloc[-1]) < 1e-6
    manifest = json.loads(err)
    assert manifest["command"] == "simulate" and manifest["seed"] == 0
    assert {"numpy", "scipy", "pandas", "python", "hypedyn"} <= set(manifest["versions"])


def test_stability_lists_three_states(capsys):
    code, out, _ = run(capsys, "stability", "--alpha", "1.5", "--capacity", "2")
    body = json.loads(out)
    assert code == 0 and len(body["steady_states"]) == 3 and body["zero_region"] == "E"


def test_no_args_usage(capsys):
    code, _, err = run(capsys)
    assert code == 1 and "usage" in err


def test_unknown_flag(capsys):
    code, _, err = run(capsys, "simulate", "--alpha", "1", "--bogus", "2")
    assert code == 1 and "usage" in err


def test_validation_exit_code(capsys):
    code, _, err = run(capsys, "simulate", "--alpha", "-1")
    assert code == 1 and "error" in err


def test_numerical_exit_code(capsys):
    code, _, err = run(capsys, "sir", "--c", "0.01", "--r", "0.1", "--N", "1000", "--A0", "500", "--dt", "5", "--horizon", "50")
    assert code == 2 and "numerical" in err


def test_out_file_and_manifest(tmp_path, capsys):
    target = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "simulate", "--alpha", "0.7", "--capacity", "0.5", "--steps", "20", "--noise-std", "0.01",
                       "--seed", "5", "--out", str(target))
    assert code == 0 and json.loads(out)["seed"] == 5
    assert len(pd.read_csv(target)) == 21


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("HYPEDYN_SEED", "42")
    args = ("simulate", "--alpha", "0.7", "--capacity", "0.5", "--steps", "50", "--noise-std", "0.01")
    code, a, err = run(capsys, *args)
    assert code == 0 and json.loads(err)["seed"] == 42
    monkeypatch.delenv("HYPEDYN_SEED")
    _, b, _ = run(capsys, *args, "--seed", "42")
    _, c, _ = run(capsys, *args, "--seed", "43")
    assert a == b and a != c


def test_regions_and_boundaries(capsys):
    code, out, _ = run(capsys, "regions", "--alpha-values", "0.7", "--cbeta-values", "0.3,2.5")
    rows = frame(out)
    assert code == 0 and rows["zero_region"].tolist() == ["C", "A"]
    code, out, _ = run(capsys, "regions", "--boundaries", "--alpha-values", "0", "--cbeta-max", "5")
    rows = frame(out)
    assert sorted(rows.loc[rows.kind == "discriminant", "cbeta"]) == pytest.approx([0, 4], abs=1e-9)


def test_phase(tmp_path, capsys):
    traj = tmp_path / "t.csv"
    code, out, _ = run(capsys, "phase", "--alpha", "0.7", "--capacity", "0.3", "--grid-n", "3", "--start", "0.1,0.1",
                       "--trajectories-out", str(traj))
    assert code == 0 and list(frame(out).columns) == ["r", "phi", "dr", "dphi"]
    assert len(pd.read_csv(traj)) == 201


def test_scans(capsys):
    code, out, _ = run(capsys, "bifurcate", "--grid-values", "0.3", "--n-init", "4", "--iters", "300")
    assert code == 0 and (frame(out)["final_r"].abs() < 1e-4).all()
    code, out, err = run(capsys, "volscan", "--grid-values", "0,1", "--n-init", "5", "--iters", "200")
    assert code == 0 and list(frame(out).columns) == ["value", "mean_std_r"]
    assert "threshold_10x" in json.loads(err)["summary"]


def test_sir(capsys):
    code, out, err = run(capsys, "sir", "--tau", "0.1", "--contact-rate", "0.01", "--period", "10", "--N", "1000",
                         "--A0", "5", "--horizon", "1")
    summary = json.loads(err)["summary"]
    assert code == 0 and summary["r"] == pytest.approx(0.1) and summary["c"] == pytest.approx(1e-3)
    assert len(frame(out)) == 101 and summary["outbreak"]


def test_sir_needs_rates(capsys):
    code, _, _ = run(capsys, "sir", "--N", "100", "--A0", "1")
    assert code == 1


def test_estimate_from_weekly(tmp_path, capsys):
    path = tmp_path / "weekly.csv"
    generate_weekly_panel(1, 10, 20).to_csv(path, index=False)
    code, out, _ = run(capsys, "estimate", "contagion", "--weekly", str(path), "--fe", "week")
    body = json.loads(out)
    assert code == 0 and [c["name"] for c in body["coefficients"]] == ["mix", "a_lag", "rbar_lag", "sigma2_lag"]
    code, out, _ = run(capsys, "estimate", "impact", "--weekly", str(path))
    assert code == 0 and set(json.loads(out)["iv"]) == {"return", "variance", "volume"}


def write_forum(tmp_path, rng, n=300):
    subs = pd.DataFrame({
        "submission_id": [f"s{i}" for i in range(n)],
        "author_id": [f"u{k}" for k in rng.integers(0, 30, n)],
        "ticker": rng.choice(["GME", "AMC", "ZZZ"], n, p=[0.5, 0.45, 0.05]),
        "timestamp_utc": np.sort(rng.uniform(1.61e9, 1.61e9 + 40 * 86400, n)),
    })
    p = rng.dirichlet([2, 2, 2], n)
    subs["p_bull"], subs["p_bear"] = p[:, 0], p[:, 1]
    subs["p_neutral"] = 1 - p[:, 0] - p[:, 1]
    subs.to_csv(tmp_path / "subs.csv", index=False)
    days = pd.bdate_range("2021-01-01", "2021-03-31")
    mk = pd.DataFrame([(t, d.date().isoformat(), rng.normal(0, 0.02), rng.uniform(1, 2) * 1e6, 1e9)
                       for t in ("GME", "AMC") for d in days],
                      columns=["ticker", "date", "log_return", "volume", "market_cap"])
    mk.to_csv(tmp_path / "market.csv", index=False)
    pd.DataFrame({"date": [d.date().isoformat() for d in days]}).to_csv(tmp_path / "cal.csv", index=False)
    return subs


def test_aggregate(tmp_path, rng, capsys):
    write_forum(tmp_path, rng)
    code, out, _ = run(capsys, "aggregate", "--submissions", str(tmp_path / "subs.csv"), "--market",
                       str(tmp_path / "market.csv"), "--calendar", str(tmp_path / "cal.csv"), "--threshold", "31")
    weekly = frame(out)
    assert code == 0 and set(weekly["ticker"]) == {"GME", "AMC"}
    assert weekly["sigma2"].notna().all()


def test_estimate_peers(tmp_path, rng, capsys):
    write_forum(tmp_path, rng)
    code, out, _ = run(capsys, "estimate", "peers", "--submissions", str(tmp_path / "subs.csv"), "--seed", "1")
    assert code == 0 and json.loads(out)["method"] == "frequent"


def test_missing_input(tmp_path, capsys):
    code, _, err = run(capsys, "estimate", "contagion", "--weekly", str(tmp_path / "none.csv"))
    assert code == 1 and "no such file" in err


def test_match(tmp_path, capsys):
    day = 86400.0
    (tmp_path / "profiles.csv").write_text(
        "user_id,group,first_active,last_active,avg_length,avg_count,external_posts,activity\n"
        f"t1,treated,0,{50 * day},100,5,a:3;b:1,{2 * day}\n"
        f"t2,treated,0,{50 * day},20,1,c:2,{3 * day}\n"
        f"c1,control,0,{50 * day},100,5,a:3;b:1,{11 * day}\n"
        f"c2,control,0,{50 * day},20,1,c:2,{13 * day}\n"
        f"c3,control,0,{50 * day},60,9,,\n"
    )
    (tmp_path / "exposures.csv").write_text(f"user_id,ticker,timestamp_utc\nt1,GME,{10 * day}\nt2,GME,{12 * day}\n")
    (tmp_path / "outcomes.csv").write_text("user_id,ticker,posted\nt1,GME,1\nt2,GME,1\nc1,GME,0\nc2,GME,1\n")
    code, out, err = run(capsys, "match", "--profiles", str(tmp_path / "profiles.csv"), "--exposures",
                         str(tmp_path / "exposures.csv"), "--outcomes", str(tmp_path / "outcomes.csv"))
    pairs = frame(out)
    assert code == 0
    assert sorted(zip(pairs["treated"], pairs["control"])) == [("t1", "c1"), ("t2", "c2")]
    effects = json.loads(err)["summary"]["effects"]
    assert effects == [{"ticker": "GME", "bucket": "1", "pi_treated": 1.0, "pi_control": 0.5,
                        "difference": 0.5, "n_pairs": 2}]


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "hypedyn.cli", "stability", "--alpha", "0.7"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["zero_region"] == "D"
