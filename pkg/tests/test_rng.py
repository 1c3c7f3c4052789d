import numpy as np

from deface_bench.rng import derive_rng


def test_same_path_same_stream():
    a = derive_rng(42, "svm", "id000", "id001").integers(0, 1 << 30, size=16)
    b = derive_rng(42, "svm", "id000", "id001").integers(0, 1 << 30, size=16)
    assert np.array_equal(a, b)


def test_different_tags_differ():
    a = derive_rng(42, "svm", "id000", "id001").integers(0, 1 << 30, size=16)
    b = derive_rng(42, "svm", "id000", "id002").integers(0, 1 << 30, size=16)
    c = derive_rng(42, "split").integers(0, 1 << 30, size=16)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_seed_changes_stream():
    a = derive_rng(1, "x").integers(0, 1 << 30, size=8)
    b = derive_rng(2, "x").integers(0, 1 << 30, size=8)
    assert not np.array_equal(a, b)


def test_path_split_points_are_distinguished():
    # ("ab", "c") and ("a", "bc") hash tag-by-tag, so they cannot collide
    a = derive_rng(0, "ab", "c").integers(0, 1 << 30, size=8)
    b = derive_rng(0, "a", "bc").integers(0, 1 << 30, size=8)
    assert not np.array_equal(a, b)
