import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siphon import kernels
from siphon.keyspace import (CapacityError, Dataset, generate_uniform, key_hash,
                             load_dataset, longest_shared_prefix, pack, prefix_lengths,
                             prefix_table, save_dataset, shared_prefix_bytes, unpack)


def test_shared_prefix_byte_and_bit():
    assert longest_shared_prefix(b"BLOND", b"BLOOD") == 24
    # N = 0x4E, O = 0x4F differ only in the last bit
    assert longest_shared_prefix(b"BLOND", b"BLOOD", granularity="bit") == 31
    assert longest_shared_prefix(b"BLUE", b"BLUE") == 32
    with pytest.raises(ValueError):
        longest_shared_prefix(b"a", b"b", granularity="nibble")


@given(st.binary(min_size=1, max_size=8))
def test_pack_roundtrip(key):
    assert unpack(pack(key), len(key)) == key


@given(st.binary(min_size=1, max_size=8), st.binary(min_size=1, max_size=8))
def test_pack_preserves_order_for_equal_widths(a, b):
    w = max(len(a), len(b))
    a, b = a.ljust(w, b"\0"), b.ljust(w, b"\0")
    assert (a < b) == (pack(a) < pack(b))


@settings(max_examples=50)
@given(st.binary(min_size=1, max_size=8), st.integers(0, 2**64 - 1))
def test_key_hash_matches_kernel(key, seed):
    packed = np.array([pack(key)], dtype=np.uint64)
    assert key_hash(key, seed) == int(kernels.hash_keys(packed, len(key), seed)[0])


def test_generate_uniform_properties():
    d = generate_uniform(5000, 24, seed=3)
    assert len(d) == 5000
    assert np.all(np.diff(d.packed.astype(np.int64)) > 0)
    assert int(d.packed.max()) < 1 << 24
    assert d == generate_uniform(5000, 24, seed=3)
    assert not np.array_equal(d.packed, generate_uniform(5000, 24, seed=4).packed)


def test_generate_full_space_and_capacity():
    d = generate_uniform(256, 8, seed=0)
    assert d.packed.tolist() == list(range(256))
    with pytest.raises(CapacityError):
        generate_uniform(257, 8, seed=0)
    with pytest.raises(ValueError):
        generate_uniform(10, 12, seed=0)


def test_generate_uniform_is_roughly_uniform():
    d = generate_uniform(1 << 14, 32, seed=11)
    counts = np.bincount((d.packed >> np.uint64(28)).astype(np.int64), minlength=16)
    expected = len(d) / 16
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 40  # 15 dof, p ~ 5e-4


def test_prefix_lengths_against_brute_force(rng):
    keys = {bytes(rng.integers(0, 4, 5, dtype=np.uint8)) for _ in range(300)}
    d = Dataset.from_keys(keys)
    shared, unique = prefix_lengths(d)
    ks = d.keys
    for i, k in enumerate(ks):
        best = max(shared_prefix_bytes(k, o) for j, o in enumerate(ks) if j != i)
        assert shared[i] == best
        assert unique[i] == min(best + 1, len(k))


def test_prefix_table_three_keys(trio):
    rows = {r.key: r for r in prefix_table(trio)}
    assert rows[b"BLOND"].max_shared_len_bits == 16
    assert all(r.unique_prefix_len_bits == 24 for r in rows.values())


def test_variable_length_prefixes():
    d = Dataset.from_keys([b"AB", b"ABC", b"ABD", b"X"])
    assert not d.fixed
    shared, unique = prefix_lengths(d)
    assert dict(zip(d.keys, unique.tolist())) == {b"AB": 2, b"ABC": 3, b"ABD": 3, b"X": 1}


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(packed=np.array([2, 1], dtype=np.uint64), key_len_bits=16)
    with pytest.raises(ValueError):
        Dataset(packed=np.array([1 << 20], dtype=np.uint64), key_len_bits=16)
    with pytest.raises(ValueError):
        Dataset()


def test_membership(small32):
    assert small32.key(5) in small32
    assert b"\x00\x00\x00" not in small32


@pytest.mark.parametrize("keys", [None, [b"BLUE", b"BLACK", b"BLOND"]])
def test_save_load_roundtrip(tmp_path, keys):
    d = generate_uniform(100, 40, seed=2) if keys is None else Dataset.from_keys(keys)
    path = tmp_path / "d.txt"
    save_dataset(d, path)
    assert load_dataset(path) == d


def test_load_rejects_bad_count(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("16,3,\n0001\n0002\n")
    with pytest.raises(ValueError):
        load_dataset(path)
