import json

from clocksync import cli


def test_phase1_phase2_train(tmp_path):
    d, m, r = tmp_path / "d.csv", tmp_path / "m.json", tmp_path / "r.csv"
    assert cli.main(["run", "--phase", "1", "--steps", "800", "--seed", "2", "--out", str(d)]) == 0
    assert cli.main(["train", "--steps", "800", "--k", "10", "--epochs", "1", "--out", str(m)]) == 0
    assert cli.main(["run", "--phase", "2", "--data", str(d), "--estimator", "S1", "--estimator", "NN",
                     "--k", "10", "--model", str(m), "--out", str(r)]) == 0
    assert len(r.read_text().splitlines()) == 3


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"delay": "sw_wsn", "steps": 400, "K": [5]}))
    out = tmp_path / "d.csv"
    assert cli.main(["run", "--phase", "1", "--scenario", str(cfg), "--steps", "300", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 301


def test_exit_codes(tmp_path):
    assert cli.main(["run", "--phase", "2", "--data", str(tmp_path / "missing.csv"), "--out",
                     str(tmp_path / "r.csv")]) == cli.EXIT_IO
    assert cli.main(["run", "--phase", "1", "--steps", "0", "--out", str(tmp_path / "x.csv")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text('{"tau": 0.5, "delay": "sw_wifi", "steps": 10}')
    # sw_wifi exchanges fit easily; a tiny period does not
    assert cli.main(["run", "--phase", "1", "--scenario", str(bad), "--tau", "1e-6", "--out",
                     str(tmp_path / "x.csv")]) == cli.EXIT_NUMERIC
    d = tmp_path / "d.csv"
    cli.main(["run", "--phase", "1", "--steps", "100", "--out", str(d)])
    assert cli.main(["run", "--phase", "2", "--data", str(d), "--estimator", "NN", "--out",
                     str(tmp_path / "r.csv")]) == cli.EXIT_CONFIG


def test_sweep_and_multihop(tmp_path):
    assert cli.main(["sweep-tau", "--scenario", "sw_wsn", "--steps", "600", "--k", "4", "--k", "8",
                     "--tau", "1", "--tau", "10", "--out", str(tmp_path / "sw")]) == 0
    assert (tmp_path / "sw" / "best_k_vs_tau.csv").exists()
    assert cli.main(["multihop", "--steps", "800", "--hops", "2", "--method", "S1",
                     "--out", str(tmp_path / "mh.csv")]) == 0
    assert len((tmp_path / "mh.csv").read_text().splitlines()) == 3
