import json

import numpy as np
import pytest

from siphon.filters import FilterConfig, false_positive_keys
from siphon.keyspace import generate_uniform
from siphon.target import (FAST, SLOW, AclPolicy, IdealizedDisabled, LatencyModel, Outcome,
                           QueryOutcome, System, SystemConfig, latency_histogram)


@pytest.fixture(scope="module")
def dset():
    return generate_uniform(1 << 12, 32, seed=11)


def make(d, **kw):
    return System.build(d, FilterConfig("surf-real"), SystemConfig(**kw))


def fp_key(sys_, seed=0):
    f = sys_.store.sstables()[0].filter
    return int(false_positive_keys(f, 1, seed)[0]).to_bytes(4, "big")


def rejected_key(sys_):
    f = sys_.store.sstables()[0].filter
    q = np.random.default_rng(0).integers(0, 1 << 32, 100, dtype=np.uint64)
    return int(q[~f.contains_many(q, 4)][0]).to_bytes(4, "big")


def test_outcome_classes(dset):
    s = make(dset, acl_fraction=0.5)
    outs = {s.system_get(dset.key(i)).outcome for i in range(40)}
    assert outs == {Outcome.UNAUTHORIZED, Outcome.VALUE}
    assert s.system_get(rejected_key(s)).outcome == Outcome.NOT_FOUND


def test_default_attacker_owns_nothing(dset):
    s = make(dset)
    assert all(s.system_get(dset.key(i)).outcome == Outcome.UNAUTHORIZED for i in range(50))


def test_non_distinguishing_mode_is_opaque(dset):
    s = make(dset, acl_mode="non_distinguishing")
    hidden = s.system_get(dset.key(3))
    missing = s.system_get(rejected_key(s))
    assert hidden.outcome == missing.outcome == Outcome.NOT_FOUND
    assert hidden.wire() == missing.wire()
    assert QueryOutcome(Outcome.UNAUTHORIZED, 1.0).wire() != missing.wire()
    with pytest.raises(ValueError):
        AclPolicy("maybe")


def test_latency_regimes(dset):
    s = make(dset)
    neg = [s.system_get(rejected_key(s)).latency_us for _ in range(200)]
    assert 5 < np.mean(neg) < 9
    fp = fp_key(s)
    cold = s.system_get(fp).latency_us
    warm = [s.system_get(fp).latency_us for _ in range(200)]
    assert cold > 30
    assert 12 < np.mean(warm) < 18


def test_latency_separability():
    m = LatencyModel()
    assert m.separated()
    rng = np.random.default_rng(0)
    fast = m.sample(np.full(1_000_000, FAST), rng)
    slow = m.sample(np.full(1_000_000, SLOW), rng)
    assert (fast > slow).mean() < 1e-4
    assert fast.min() >= 1.0


def test_degenerate_model_not_separated():
    assert not LatencyModel(slow_mean_us=7.0).separated()


def test_determinism(dset):
    q = np.random.default_rng(3).integers(0, 1 << 32, 5000, dtype=np.uint64)
    q[::10] = dset.packed[:500]
    a, b = make(dset, seed=5), make(dset, seed=5)
    ra, rb = a.system_get_many(q, 4), b.system_get_many(q, 4)
    assert np.array_equal(ra[0], rb[0]) and np.array_equal(ra[1], rb[1])


def test_idealized_probe(dset):
    s = make(dset, idealized=True)
    assert s.idealized_probe(dset.key(0))
    assert s.idealized_probe(fp_key(s))
    assert not s.idealized_probe(rejected_key(s))
    with pytest.raises(IdealizedDisabled):
        make(dset).idealized_probe(dset.key(0))


def test_background_load(dset):
    s = make(dset, eviction_ops=1000)
    before = s.store.stats()
    s.run_background_load(0)
    assert s.store.stats() == before
    s.run_background_load(500)
    assert s.store.stats()["get_counter"] == before["get_counter"] + 500
    fp = fp_key(s)
    s.system_get(fp)
    s.run_background_load(400)
    assert s.system_get(fp).latency_us < 40   # still resident
    s.run_background_load(1000)
    assert s.store.resident_blocks() == 0


def test_background_is_deterministic(dset):
    a, b = make(dset, seed=2), make(dset, seed=2)
    a.run_background_load(3000)
    b.run_background_load(3000)
    assert a.store.stats() == b.store.stats()


def test_config_roundtrip(tmp_path):
    cfg = SystemConfig(eviction_ops=77, latency=LatencyModel(fast_mean_us=6.0))
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert SystemConfig.load(path) == cfg
    with pytest.raises(ValueError):
        SystemConfig.from_dict({"bogus": 1})


def test_histogram():
    assert latency_histogram(np.array([])) == []
    rows = latency_histogram(np.array([1.0, 6.0, 7.0, 80.0]), 5.0, np.array([0, 0, 0, 1], bool))
    assert rows[0] == {"bucket_lo_us": 0.0, "bucket_hi_us": 5.0, "count": 1, "fp_count": 0}
    assert rows[1]["count"] == 2
    assert rows[-1]["fp_count"] == 1
    assert sum(r["count"] for r in rows) == 4
