import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from ssrgr import data
from ssrgr.data import Dataset, SplitSpec
from ssrgr.errors import (DataError, InvalidConfigError, InvalidSplitError,
                          NormalizationError, ParseError)

from oracles import best_linear_threshold_accuracy, one_nn_accuracy


# -- file formats ----------------------------------------------------------------

def test_small_text_file(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("2 3 1\n1 2 3\n4 5 6\n1 1 2\n")
    ds = data.load_dataset(p)
    assert ds.n == 3 and ds.class_count == 2
    np.testing.assert_array_equal(ds.features, [[1, 2, 3], [4, 5, 6]])
    np.testing.assert_array_equal(ds.labels, [0, 0, 1])


def test_zero_label_means_unlabeled(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("1 3 1\n1 2 3\n1 0 2\n")
    np.testing.assert_array_equal(data.load_dataset(p).labels, [0, -1, 1])


def test_unlabeled_text_file(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("1 2 0\n0.5 -1\n")
    ds = data.load_dataset(p)
    assert ds.labels is None and ds.dim == 1


@pytest.mark.parametrize("text,match", [
    ("", "empty"),
    ("\n\n", "empty"),
    ("2 x 1\n", "header"),
    ("2 2 0\n1 2\n", "expected 2 data lines"),
    ("1 2 0\n1 2 3\n", ":2: expected 2 values"),
    ("1 2 0\n1 abc\n", ":2:"),
    ("1 2 1\n1 2\n1\n", ":3: expected 2 labels"),
    ("1 2 1\n1 2\n1 1.5\n", "non-negative integers"),
    ("1 2 0\n1 nan\n", "NaN"),
])
def test_text_parse_errors(tmp_path, text, match):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError, match=match):
        data.load_dataset(p)


def test_missing_file_and_unknown_format(tmp_path):
    with pytest.raises(DataError):
        data.load_dataset(tmp_path / "nope.txt")
    with pytest.raises(InvalidConfigError):
        data.load_dataset(tmp_path / "nope.txt", format="csv")


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_round_trip(tmp_path, fmt):
    ds = data.synthetic_blobs(seed=4)
    p = tmp_path / "d"
    data.save_dataset(ds, p, fmt)
    back = data.load_dataset(p, fmt)
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_binary_round_trip_preserves_bytes(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    data.save_binary(data.synthetic_circles(seed=1), a)
    data.save_binary(data.load_binary(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_binary_layout(tmp_path):
    p = tmp_path / "d.bin"
    data.save_binary(Dataset(np.array([[1.0, 2.0]]), np.array([0, 1])), p)
    raw = p.read_bytes()
    assert raw[:4] == b"SRD1" and len(raw) == 16 + 8 * 4
    np.testing.assert_array_equal(np.frombuffer(raw[16:], "<f8"), [1, 2, 1, 2])


def test_binary_errors(tmp_path):
    p = tmp_path / "d.bin"
    p.write_bytes(b"SRD1")
    with pytest.raises(ParseError, match="header"):
        data.load_binary(p)
    p.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ParseError, match="magic"):
        data.load_binary(p)
    data.save_binary(Dataset(np.ones((2, 2))), p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(ParseError, match="bytes"):
        data.load_binary(p)


def test_dataset_validation():
    with pytest.raises(DataError, match="2 labels for 3"):
        Dataset(np.zeros((2, 3)), np.array([0, 1]))
    with pytest.raises(DataError):
        Dataset(np.array([[np.inf]]))


# -- random projection -----------------------------------------------------------

def test_projection_identity_bypass():
    X = np.random.default_rng(0).standard_normal((4, 6))
    np.testing.assert_array_equal(data.random_projection(X, 4, identity=True), X)


def test_projection_deterministic_and_validated():
    X = np.random.default_rng(0).standard_normal((30, 5))
    a = data.random_projection(X, 10, seed=7)
    assert a.tobytes() == data.random_projection(X, 10, seed=7).tobytes()
    assert a.shape == (10, 5)
    with pytest.raises(InvalidConfigError):
        data.random_projection(X, 0)


def test_projection_distortion():
    X = np.random.default_rng(0).standard_normal((1000, 50))
    P = data.random_projection(X, 100, seed=0)
    ratio = pdist(P.T) / pdist(X.T)
    # measured 0.218 on this seed
    assert np.max(np.abs(ratio - 1.0)) < 0.5


# -- splitting -------------------------------------------------------------------

def test_split_counts_and_cover():
    ds = data.synthetic_blobs(per_class=20, seed=1)
    lab, unl = data.split(ds, SplitSpec(4, seed=3))
    assert np.all(np.bincount(ds.labels[lab]) == 4)
    assert np.intersect1d(lab, unl).size == 0
    np.testing.assert_array_equal(np.union1d(lab, unl), np.arange(ds.n))


def test_split_all_members_labeled():
    ds = data.synthetic_blobs(per_class=6)
    lab, unl = data.split(ds, SplitSpec(6))
    assert unl.size == 0 and lab.size == ds.n


def test_split_seeds():
    ds = data.synthetic_blobs(per_class=30)
    a = data.split(ds, SplitSpec(5, seed=0))[0]
    b = data.split(ds, SplitSpec(5, seed=1))[0]
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(np.bincount(ds.labels[a]), np.bincount(ds.labels[b]))
    np.testing.assert_array_equal(a, data.split(ds, SplitSpec(5, seed=0))[0])


def test_split_errors():
    ds = data.synthetic_blobs(per_class=3)
    with pytest.raises(InvalidSplitError, match="class 1 has 3 members"):
        data.split(ds, SplitSpec(4))
    with pytest.raises(InvalidSplitError):
        data.split(ds, SplitSpec(0))
    with pytest.raises(InvalidSplitError):
        data.split(Dataset(np.ones((1, 2)), np.array([0, -1])), SplitSpec(1))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), classes=st.integers(2, 5), per=st.integers(1, 6))
def test_split_counts_random(seed, classes, per):
    rng = np.random.default_rng(seed)
    sizes = rng.integers(per, per + 8, classes)
    labels = rng.permutation(np.repeat(np.arange(classes), sizes))
    ds = Dataset(rng.standard_normal((2, labels.size)), labels)
    lab, unl = data.split(ds, SplitSpec(per, seed=seed))
    np.testing.assert_array_equal(np.bincount(labels[lab], minlength=classes), per)
    assert lab.size + unl.size == labels.size


def test_mask_labels():
    np.testing.assert_array_equal(data.mask_labels([2, 0, 1], [0, 2]), [2, -1, 1])


# -- synthetic generators ----------------------------------------------------------

def test_blobs_zero_spread_sits_on_means():
    ds = data.synthetic_blobs(spread=0.0, seed=2)
    for c in range(3):
        cols = ds.features[:, ds.labels == c]
        np.testing.assert_array_equal(cols, cols[:, :1].repeat(cols.shape[1], axis=1))
    means = np.stack([ds.features[:, ds.labels == c][:, 0] for c in range(3)], axis=1)
    np.testing.assert_allclose(pdist(means.T), 1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_blobs_default_nearest_neighbor(seed):
    ds = data.synthetic_blobs(seed=seed)
    assert ds.features.shape == (10, 150)
    # 1-NN oracle measured 1.0 on seeds 0..2
    assert one_nn_accuracy(ds.features, ds.labels) >= 0.99


def test_generators_deterministic():
    assert (data.synthetic_blobs(seed=5).features.tobytes()
            == data.synthetic_blobs(seed=5).features.tobytes())
    assert (data.synthetic_circles(seed=5).features.tobytes()
            == data.synthetic_circles(seed=5).features.tobytes())


def test_generator_validation():
    with pytest.raises(InvalidConfigError):
        data.synthetic_blobs(classes=1)
    with pytest.raises(InvalidConfigError):
        data.synthetic_circles(per_class=9)


def test_circles_noiseless_radii():
    ds = data.synthetic_circles(noise=0.0, seed=3)
    r = np.linalg.norm(ds.features, axis=0)
    np.testing.assert_allclose(r[ds.labels == 0], 1.0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(r[ds.labels == 1], 2.0, rtol=0, atol=1e-15)


@pytest.mark.xfail(strict=True, reason="a threshold at 1 on any projection classifies all "
                   "inner points and a third of outer points correctly, so the best "
                   "threshold accuracy is about 2/3 for any sample")
def test_circles_not_linearly_separable_bound():
    ds = data.synthetic_circles(noise=0.05, seed=0)
    assert best_linear_threshold_accuracy(ds.features, ds.labels) <= 0.6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_circles_best_threshold_near_two_thirds(seed):
    ds = data.synthetic_circles(noise=0.05, seed=seed)
    # oracle measured 0.700, 0.715, 0.700
    assert abs(best_linear_threshold_accuracy(ds.features, ds.labels) - 2 / 3) <= 0.06


# -- normalization ---------------------------------------------------------------

def test_normalize_example():
    np.testing.assert_allclose(data.normalize_columns([[3.0], [4.0]]), [[0.6], [0.8]])


def test_normalize_zero_column_named():
    with pytest.raises(NormalizationError, match="column 1"):
        data.normalize_columns(np.array([[1.0, 0.0], [0.0, 0.0]]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_normalize_unit_and_idempotent(seed):
    X = np.random.default_rng(seed).standard_normal((5, 7)) * 10
    once = data.normalize_columns(X)
    np.testing.assert_allclose(np.linalg.norm(once, axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(data.normalize_columns(once), once, atol=1e-15)
