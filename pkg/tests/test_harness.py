import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clocksync import harness as hs
from clocksync.clockdyn import OMEGA_HIGH, ThermalProfile
from clocksync.exchange import SW_WIFI, SW_WSN, Delay, read_dataset
from clocksync.neural import TrainConfig

US = 1e-6


def test_p999_examples():
    assert hs.p999(np.full(1000, 1 * US)) == 1 * US
    assert hs.p999(np.arange(1, 100_001) * 1e-9) == pytest.approx(99_900e-9)
    with pytest.raises(ValueError):
        hs.p999([])


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=3000))
def test_p999_matches_sort_oracle(values):
    a = np.abs(np.array(values))
    oracle = np.sort(a)[math.ceil(0.999 * len(a)) - 1]
    assert hs.p999(values) == oracle
    assert hs.p999(values) == hs.p999(-np.array(values))


def test_p999_random_sequences():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        a = rng.normal(size=rng.integers(1, 60))
        assert hs.p999(a) == np.sort(np.abs(a))[math.ceil(0.999 * a.size) - 1]


def test_named_scenarios_expand_to_tables():
    cfg = hs.ScenarioConfig(delay="sw_wsn", thermal="omega_high", n_mu=1.5, n_sigma=2.0)
    assert cfg.thermal_profile() == OMEGA_HIGH
    assert cfg.delay_profile() == replace(SW_WSN, n_mu=1.5, n_sigma=2.0)
    assert cfg.quantization().resolution == 0
    assert hs.ScenarioConfig(delay="hw_wsn").quantization().resolution == 1 / 32768
    exp = hs.ScenarioConfig(delay="exp").delay_profile()
    assert exp.prop_sr == Delay("exp", 1e-6) and exp.s_send.mean == 0
    comp = hs.ScenarioConfig(delay="composite").delay_profile()
    assert comp.s_send == SW_WIFI.s_send and comp.prop_rs == Delay("exp", 1e-6)


@pytest.mark.parametrize("bad", [dict(delay="lte"), dict(thermal="arctic"), dict(steps=0), dict(tau=-1),
                                 dict(K=(0,)), dict(estimators=("S4",))])
def test_config_rejects(bad):
    with pytest.raises(hs.ConfigError):
        hs.ScenarioConfig(**bad)


def test_config_json_roundtrip(tmp_path):
    cfg = hs.ScenarioConfig(thermal=ThermalProfile(tc=30.0), delay="hw_wifi", K=(5, 10), estimators=("S1", "NN"))
    p = tmp_path / "c.json"
    cfg.save(p)
    assert hs.ScenarioConfig.load(p) == cfg
    p.write_text('{"delay": "sw_wifi", "colour": 3}')
    with pytest.raises(hs.ConfigError):
        hs.ScenarioConfig.load(p)
    p.write_text("{nope")
    with pytest.raises(hs.ConfigError):
        hs.ScenarioConfig.load(p)


def test_phase1_deterministic_bytes(tmp_path):
    cfg = hs.ScenarioConfig(steps=500, seed=9)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    hs.run_phase1(cfg, a)
    hs.run_phase1(cfg, b)
    assert a.read_bytes() == b.read_bytes()
    assert len(read_dataset(a)) == 500


def test_noiseless_linear_recovered():
    cfg = hs.ScenarioConfig(delay="exp", exp_mean=0.0, thermal="constant", var_theta=0.0, var_gamma=0.0,
                            steps=300)
    data = hs.simulate(cfg)
    for est in ("S1", "S2", "S3"):
        assert hs.ErrorStats.of(hs.estimation_errors(data, est, 10)).p999 <= 1e-9


def test_phase2_fair_and_consistent(small_dataset, tmp_path):
    p = tmp_path / "d.csv"
    from clocksync.exchange import write_dataset
    write_dataset(small_dataset, p)
    r1 = hs.run_phase2(p, ["S1", "S2"], [10, 20])
    r2 = hs.run_phase2(small_dataset, ["S2"], [10])
    assert r1.digest == r2.digest == hs.dataset_digest(small_dataset)
    assert r1.get("S2", 10) == r2.get("S2", 10)
    for r in r1.rows:
        assert 0 <= r.sigma and r.p999 <= r.max
        assert r.n == len(small_dataset) - r.K


def test_phase2_errors(small_dataset):
    with pytest.raises(hs.MissingModelError):
        hs.run_phase2(small_dataset, ["NN"], [10])
    with pytest.raises(ValueError):
        hs.run_phase2(small_dataset, ["S1"], [len(small_dataset)])


def test_experiment_trains_on_independent_seed():
    cfg = hs.ScenarioConfig(steps=2000, seed=3, K=(8,), estimators=("S1", "NN"))
    report, models = hs.run_experiment(cfg, TrainConfig(epochs=2, seed=cfg.train_seed))
    assert cfg.train_seed != cfg.seed
    assert not hs.simulate(cfg, cfg.train_seed, 2000) == hs.simulate(cfg)
    assert set(models) == {("NN", 8)}
    assert {r.estimator for r in report.rows} == {"S1", "NN"}


def test_report_csv_roundtrip(tmp_path, small_dataset):
    rep = hs.run_phase2(small_dataset, ["S1", "S3"], [5, 25])
    p = tmp_path / "r.csv"
    rep.write_csv(p)
    assert hs.ErrorReport.read_csv(p).rows == rep.rows


def test_plot_data_roundtrip(tmp_path, small_dataset):
    rep = hs.run_phase2(small_dataset, ["S1", "S2", "S3"], [5, 10, 20])
    p = hs.emit_plot_data(rep, tmp_path / "fig.csv")
    x, ks, cols = hs.read_plot_data(p)
    assert x == "K" and list(ks) == [5, 10, 20]
    for est in ("S1", "S2", "S3"):
        assert list(cols[est]) == [rep.get(est, k).p999 for k in (5, 10, 20)]
    one = hs.ErrorReport(rep.rows[:1])
    _, ks, _ = hs.read_plot_data(hs.emit_plot_data(one, tmp_path / "one.csv"))
    assert len(ks) == 1
    with pytest.raises(ValueError):
        hs.emit_plot_data(hs.ErrorReport(), tmp_path / "none.csv")


def test_sweep_tau_best_rows():
    cfg = hs.ScenarioConfig(delay="sw_wsn", steps=1500, K=(4, 8, 16), estimators=("S1",))
    sweep = hs.sweep_tau(cfg, [1.0, 10.0])
    best = sweep.best()
    assert [r.tau for r in best.rows] == [1.0, 10.0]
    for r in best.rows:
        assert r.p999 == min(x.p999 for x in sweep.reports[r.tau].rows)
