import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longal.core import (
    ChangeLabel,
    PairKey,
    PairPool,
    Slice,
    SlicePair,
    Volume,
    assemble_change_map,
    assemble_input,
    build_pair_pool,
    difference,
    pair_keys,
    slice_volume,
)
from longal.errors import DimensionMismatch, DuplicateSlice, InsufficientTimepoints, InvalidPair, MissingSlice


def _volumes(pid, T, shape, seed=0):
    rng = np.random.default_rng(seed)
    return [Volume(pid, t, rng.random(shape)) for t in range(1, T + 1)]


# ------------------------------------------------------------------ slicing
def test_slice_volume_counts_and_shapes():
    s = slice_volume(Volume("a", 1, np.zeros((2, 2, 3))))
    assert len(s) == 3 and all(x.pixels.shape == (2, 2) for x in s)


def test_single_plane_volume_is_its_own_slice():
    plane = np.arange(12, dtype=np.float32).reshape(3, 4)
    (s,) = slice_volume(Volume("a", 1, plane[:, :, None]))
    np.testing.assert_array_equal(s.pixels, plane)


def test_constant_plane_extracts_exactly():
    data = np.zeros((4, 4, 3), dtype=np.float32)
    data[:, :, 1] = 0.7
    s = slice_volume(Volume("a", 1, data))
    assert np.all(s[1].pixels == np.float32(0.7))


def test_volume_rejects_bad_dims():
    with pytest.raises(DimensionMismatch):
        Volume("a", 1, np.zeros((2, 2, 2, 2)))


# --------------------------------------------------------------- pair law
def test_pair_count_examples():
    assert len(build_pair_pool(_volumes("a", 2, (3, 3, 5)))) == 5
    assert len(build_pair_pool(_volumes("a", 3, (3, 3, 4)))) == 12


def _enumerate_pairs(spec):
    """Exhaustive oracle: every ordered (t, t') with t' > t and every slice k."""
    out = set()
    for pid, T, c in spec:
        for t in range(1, T + 1):
            for t2 in range(1, T + 1):
                if t2 > t:
                    for k in range(c):
                        out.add((pid, k, t, t2))
    return out


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(2, 5), st.integers(1, 4)), min_size=1, max_size=4))
def test_pool_size_law_matches_enumeration(shapes):
    spec = [(f"p{i}", T, c) for i, (T, c) in enumerate(shapes)]
    vols = [v for pid, T, c in spec for v in _volumes(pid, T, (2, 2, c))]
    pool = build_pair_pool(vols)
    assert len(pool) == sum(math.comb(T, 2) * c for _, T, c in spec)
    assert {tuple(k) for k in pool.keys} == _enumerate_pairs(spec)
    assert pool.keys == sorted(pool.keys)


def test_pair_keys_helper_and_roundtrip():
    keys = pair_keys("p01", [1, 2, 3], 2)
    assert len(keys) == 6
    for k in keys:
        assert PairKey.parse(str(k)) == k
    assert str(PairKey("p007", 12, 1, 2)) == "p007/k12/t1-t2"


def test_single_timepoint_patient_is_rejected():
    with pytest.raises(InsufficientTimepoints):
        build_pair_pool(_volumes("a", 1, (2, 2, 2)))


def test_inconsistent_slice_shapes_rejected():
    vols = [Volume("a", 1, np.zeros((2, 2, 2))), Volume("a", 2, np.zeros((2, 3, 2)))]
    with pytest.raises(DimensionMismatch):
        build_pair_pool(vols)


# --------------------------------------------------------- input assembly
def _pair(b, f, t=1, t2=2):
    return SlicePair.from_slices(Slice("a", t, 0, np.asarray(b, np.float32)), Slice("a", t2, 0, np.asarray(f, np.float32)))


def test_identical_scans_give_zero_difference():
    x = np.random.default_rng(0).random((4, 4))
    assert np.all(assemble_input(_pair(x, x))[2] == 0)


def test_difference_sign_convention():
    x = assemble_input(_pair(np.zeros((3, 3)), np.ones((3, 3))))
    assert x.shape == (3, 3, 3) and np.all(x[2] == 1.0)


def test_reversed_pair_rejected():
    with pytest.raises(InvalidPair):
        _pair(np.zeros((2, 2)), np.zeros((2, 2)), t=2, t2=1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_difference_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((5, 5)), rng.random((5, 5))
    np.testing.assert_array_equal(difference(a, b), -difference(b, a))


# ----------------------------------------------------------- change maps
def test_zero_probabilities_give_empty_map():
    m = assemble_change_map([(k, np.zeros((3, 3))) for k in range(2)])
    assert m.voxels.shape == (3, 3, 2) and m.voxels.sum() == 0


def test_single_confident_pixel():
    p = np.zeros((4, 4))
    p[2, 1] = 0.9
    m = assemble_change_map([(0, p)], 0.5)
    assert m.voxels.sum() == 1 and m.voxels[2, 1, 0] == 1


def test_threshold_sweep_is_monotone(rng):
    p = rng.random((8, 8))
    counts = [assemble_change_map([(0, p)], th).voxels.sum() for th in (0.3, 0.5, 0.7)]
    assert counts == [int((p >= th).sum()) for th in (0.3, 0.5, 0.7)]
    assert counts[0] >= counts[1] >= counts[2]


def test_missing_and_duplicate_slices():
    z = np.zeros((2, 2))
    with pytest.raises(MissingSlice):
        assemble_change_map([(0, z), (2, z)])
    with pytest.raises(DuplicateSlice):
        assemble_change_map([(0, z), (0, z)])


# ------------------------------------------------------------- partition
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 12))
def test_partition_invariant_under_labeling(seed, n_label):
    pool = build_pair_pool(_volumes("a", 3, (2, 2, 4)))
    rng = np.random.default_rng(seed)
    for i in rng.permutation(len(pool))[:n_label]:
        pool.add_label(ChangeLabel(pool.keys[i], np.zeros((2, 2), np.uint8)))
        pool.check_partition()
    assert len(pool.labeled) + len(pool.unlabeled_keys) == len(pool)


def test_add_label_rejects_duplicates_and_bad_shapes():
    pool = build_pair_pool(_volumes("a", 2, (2, 2, 1)))
    (key,) = pool.keys
    with pytest.raises(DimensionMismatch):
        pool.add_label(ChangeLabel(key, np.zeros((3, 3), np.uint8)))
    pool.add_label(ChangeLabel(key, np.zeros((2, 2), np.uint8)))
    with pytest.raises(ValueError):
        pool.add_label(ChangeLabel(key, np.zeros((2, 2), np.uint8)))


def test_pool_order_is_canonical():
    vols = _volumes("b", 3, (2, 2, 2)) + _volumes("a", 2, (2, 2, 2))
    keys = build_pair_pool(vols).keys
    assert keys == sorted(itertools.chain(pair_keys("a", [1, 2], 2), pair_keys("b", [1, 2, 3], 2)))
