import json
import subprocess
import sys

import numpy as np
import pytest

from cmix import cli
from cmix import processes as pr
from cmix import smoothers as sm
from fixture_hash import FIXTURES, frozen_hashes, verify_hash


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_missing_required_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bound", "--family", "geometric-1d", "--N", "100", "--t", "0.1", "--A", "1"])
    assert exc.value.code == 2
    assert "--sigma2" in capsys.readouterr().err


def test_bad_list_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bound", "--family", "geometric-1d", "--N", "ten", "--t", "0.1", "--A", "1", "--sigma2", "1"])
    assert exc.value.code == 2
    assert "--N" in capsys.readouterr().err


def test_bad_csv_header_exits_1(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("index,x_1,z\n1,0.5,0.1\n")
    code, _, err = run(["estimate", "--input", str(f), "--estimator", "mean"], capsys)
    assert code == 1
    assert err.startswith("cmix: error:") and "'z'" in err


def test_console_script_exit_codes():
    ok = subprocess.run([sys.executable, "-m", "cmix.cli", "blocks", "--nk", "4", "--P", "2"],
                        capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.startswith("block_id,")
    bad = subprocess.run([sys.executable, "-m", "cmix.cli", "blocks"], capture_output=True, text=True)
    assert bad.returncode == 2


def test_simulate_writes_n_rows_and_sidecar(tmp_path, capsys):
    out = tmp_path / "x.csv"
    code, _, err = run(["simulate", "--process", "doubling", "--N", "50", "--seed", "3", "--out", str(out)], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "index,x_1" and len(lines) == 51
    meta = json.loads((tmp_path / "x.csv.meta.json").read_text())
    assert meta["seed"] == 3 and meta["N"] == 50
    assert json.loads((tmp_path / "x.csv.json").read_text())["kind"] == "series"
    assert err.startswith("config: ")


def test_seed_echo_and_env_override(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV, raising=False)
    code, out, err = run(["simulate", "--process", "logistic", "--N", "5"], capsys)
    assert code == 0 and "seed: " in err
    monkeypatch.setenv(cli.SEED_ENV, "42")
    _, a, err = run(["simulate", "--process", "logistic", "--N", "5"], capsys)
    _, b, _ = run(["simulate", "--process", "logistic", "--N", "5", "--seed", "42"], capsys)
    assert a == b and "seed: " not in err
    monkeypatch.setenv(cli.SEED_ENV, "nope")
    code, _, err = run(["simulate", "--process", "logistic", "--N", "5"], capsys)
    assert code == 1 and cli.SEED_ENV in err


def test_simulate_estimate_round_trip(tmp_path, capsys):
    data = tmp_path / "d.csv"
    run(["simulate", "--process", "markov", "--N", "400", "--mean-fn", "sin", "--sigma-fn", "wave",
         "--L", "2.3", "--seed", "8", "--out", str(data)], capsys)
    ds = pr.dataset_from_csv(data.read_text(), json.loads((tmp_path / "d.csv.json").read_text()))
    x = pr.simulate_markov_jitter(400, seed=8)
    ref = pr.make_regression_dataset(x, "sin", "wave", 2.3, seed=ds.generator["seed"])
    assert np.array_equal(ds.x, ref.x) and np.array_equal(ds.y, ref.y)

    est = tmp_path / "e.csv"
    code, _, _ = run(["estimate", "--input", str(data), "--estimator", "mean", "--bandwidth", "value:0.2",
                      "--grid-points", "11", "--out", str(est)], capsys)
    assert code == 0
    rows = [r.split(",") for r in est.read_text().splitlines()]
    assert rows[0] == ["grid_point", "estimate", "defined"]
    g = np.array([float(r[0]) for r in rows[1:]])
    direct = sm.nw_mean(ref.x, ref.y, 0.2, sm.KernelSpec(), g)
    assert np.array_equal(np.array([float(r[1]) for r in rows[1:]]), direct)
    assert all(r[2] == "1" for r in rows[1:])


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "f.txt"
    cli.atomic_write(str(target), "a\n")
    cli.atomic_write(str(target), "b\n")
    assert target.read_text() == "b\n"
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


def test_blocks_csv(capsys):
    code, out, _ = run(["blocks", "--nk", "3,2", "--P", "2"], capsys)
    assert code == 0
    rows = [r.split(",") for r in out.splitlines()]
    assert rows[0] == ["block_id", "scalar_index", "lattice_index_1", "lattice_index_2"]
    assert sorted(int(r[1]) for r in rows[1:]) == list(range(1, 7))


def test_bound_jsonl_and_csv(capsys):
    argv = ["bound", "--family", "geometric-1d", "--N", "1000,10000", "--t", "0.05,0.1",
            "--A", "1", "--B", "6.283185307179586", "--sigma2", "0.5"]
    code, out, _ = run(argv, capsys)
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and len(rows) == 4
    assert all(0 <= r["bound"] <= 1 and r["N0"] == 8 for r in rows)
    code, out, _ = run(argv + ["--format", "csv"], capsys)
    header = out.splitlines()[0].split(",")
    assert {"N0", "bound", "params.t"} <= set(header) and len(out.splitlines()) == 5


def test_conditions_reports_flags(capsys):
    code, out, _ = run(["conditions", "--which", "cor7", "--N", "1e12", "--t", "0.05", "--sigmaF2", "3.947",
                        "--A", "3.947", "--B", "41.55", "--h", "0.19"], capsys)
    rec = json.loads(out)
    assert code == 0 and set(rec["flags"]) == {"D1", "D2", "D3", "D4"}


@pytest.mark.parametrize("name", ["verify_tail.ini", "verify_rate.ini"])
def test_verify_fixture_hashes(name, tmp_path):
    want = frozen_hashes()[name]
    assert verify_hash(name, 1, tmp_path) == want
    assert verify_hash(name, 8, tmp_path) == want


def test_verify_csv_format_and_summary(tmp_path, capsys):
    out = tmp_path / "t"
    code, _, _ = run(["verify-tail", "--config", str(FIXTURES / "verify_tail.ini"), "--format", "csv",
                      "--out", str(out)], capsys)
    assert code == 0
    lines = (tmp_path / "t.csv").read_text().splitlines()
    width = len(lines[0].split(","))
    assert all(len(line.split(",")) == width for line in lines)
    meta = json.loads((tmp_path / "t.meta.json").read_text())
    assert set(meta["experiments"]) == {"doubling_sin", "markov_ramp"}
    assert "workers" not in meta


def test_verify_rejects_wrong_kind(tmp_path, capsys):
    code, _, err = run(["verify-rate", "--config", str(FIXTURES / "verify_tail.ini")], capsys)
    assert code == 1 and "kind = rate" in err
