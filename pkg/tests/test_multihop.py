import numpy as np
import pytest

from clocksync import harness as hs
from clocksync import multihop as mh
from clocksync.neural import TrainConfig, build_training_set

STEPS = 3000
FAST = TrainConfig(epochs=1, seed=5)


@pytest.fixture(scope="module")
def chain():
    return mh.run_chain(mh.HopChainConfig().with_seed(2), STEPS, mh.HopEstimator("S1", 10))


def test_single_hop_equivalence():
    cfg = mh.HopChainConfig().with_seed(4).truncated(1)
    res = mh.run_chain(cfg, STEPS, mh.HopEstimator("S1", 20))
    data = hs.simulate(hs.ScenarioConfig(steps=STEPS, seed=4))
    assert res.hops[0].data == data
    assert np.array_equal(res.hops[0].errors, hs.estimation_errors(data, "S1", 20))


def test_hops_start_after_upstream_warmup(chain):
    assert [int(h.data.k[0]) for h in chain.hops] == [0, 10, 20, 30, 40]
    assert all(int(h.data.k[-1]) == STEPS - 1 for h in chain.hops)


def test_truth_is_root_time(chain):
    for h in chain.hops:
        assert np.allclose(h.data.eval_receiver - h.data.k * 1.0, 0.0, atol=1e-3)


def test_error_grows_with_hops(chain):
    sig = [s.sigma for s in chain.stats()]
    assert sig == sorted(sig)


def test_oracle_upstream_equals_direct_connection():
    cfg = mh.HopChainConfig().with_seed(6).truncated(2)
    res = mh.run_chain(cfg, STEPS, [mh.HopEstimator("oracle"), mh.HopEstimator("S1", 10)])
    assert res.hops[1].data == mh.direct_to_root(cfg, STEPS, 2)
    assert np.array_equal(res.hops[0].errors, np.zeros(STEPS))


def test_virtual_clock_range_checked(chain):
    vc = chain.hops[0].clock
    with pytest.raises(mh.ChainOrderError):
        vc(np.array([0]), np.array([0.0]))


def test_estimator_count_checked():
    with pytest.raises(ValueError):
        mh.run_chain(mh.HopChainConfig(), 100, [mh.HopEstimator("S1", 5)] * 2)
    with pytest.raises(mh.ChainOrderError):
        mh.run_chain(mh.HopChainConfig(), 30, mh.HopEstimator("S1", 10))
    with pytest.raises(ValueError):
        mh.HopEstimator("NN")


def test_db_link_single_hop_equals_single_hop_database():
    cfg = mh.HopChainConfig().with_seed(8).truncated(1)
    dbs, models = mh.build_db_link(cfg, STEPS, K=10, train_config=FAST)
    ref = build_training_set(hs.simulate(hs.ScenarioConfig(steps=STEPS, seed=8)), 10)
    assert np.array_equal(dbs[0].features, ref.features)
    assert np.array_equal(dbs[0].targets, ref.targets)
    assert len(models) == 1


def test_db_link_reproducible():
    cfg = mh.HopChainConfig().with_seed(8).truncated(2)
    a, _ = mh.build_db_link(cfg, 1500, K=10, train_config=FAST)
    b, _ = mh.build_db_link(cfg, 1500, K=10, train_config=FAST)
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))


def test_genA_sizes_and_single_hop():
    cfg = mh.HopChainConfig().with_seed(1)
    db = mh.build_db_genA(cfg, 1000, K=10)
    assert len(db) == 5 * (1000 - 10)
    one = mh.build_db_genA(cfg.truncated(1), 1000, K=10)
    ref = build_training_set(hs.simulate(hs.ScenarioConfig(steps=1000, seed=1)), 10)
    assert np.array_equal(one.targets, ref.targets)


def test_genB_single_hop_equals_link():
    cfg = mh.HopChainConfig().with_seed(3).truncated(1)
    dbs, _ = mh.build_db_link(cfg, 1500, K=10, train_config=FAST)
    gb = mh.build_db_genB(cfg, 1500, K=10, train_config=FAST)
    assert np.array_equal(gb.features, dbs[0].features)


def test_genB_reverses_profiles():
    cfg = mh.HopChainConfig()
    assert cfg.reversed().thermal[0] == cfg.thermal[4]
    assert cfg.reversed().thermal[4] == cfg.thermal[0]


def test_hop_table_csv(tmp_path, chain):
    rows = mh.hop_table("S1", chain)
    mh.write_hop_table(rows, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "method,hop,K,sigma,p999,max"
    assert len(lines) == 6
    assert all(r.p999 <= r.max for r in rows)


def test_chain_dataset_has_hop_column(chain, tmp_path):
    from clocksync.exchange import read_dataset, write_dataset
    d = chain.dataset()
    assert set(d.hop.tolist()) == {1, 2, 3, 4, 5}
    write_dataset(d, tmp_path / "c.csv")
    assert read_dataset(tmp_path / "c.csv") == d
