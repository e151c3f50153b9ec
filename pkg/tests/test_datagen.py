import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from sklearn.linear_model import LogisticRegression

from l2blab.datagen import (
    SPIRAL_RADIUS,
    SPIRAL_TURN,
    Dataset,
    blob_centers,
    gen_blobs,
    gen_spirals,
    inject_asymmetric,
    inject_symmetric,
    read_csv,
    split,
    write_csv,
)
from l2blab.harness import TrainConfig, train
from l2blab.model import predict_probs
from l2blab.numcore import InvalidInputError, make_rng


def test_blobs_bookkeeping():
    ds = gen_blobs(4, 25, 3, 2.0, make_rng(0))
    assert len(ds) == 100 and ds.dim == 3 and ds.num_classes == 4
    np.testing.assert_array_equal(np.bincount(ds.labels_clean), [25] * 4)
    assert not ds.noise_mask.any()


def test_blobs_deterministic():
    a = gen_blobs(3, 10, 2, 1.0, make_rng(5))
    b = gen_blobs(3, 10, 2, 1.0, make_rng(5))
    assert a.features.tobytes() == b.features.tobytes()


@pytest.mark.parametrize("L,d", [(4, 2), (3, 1), (4, 3), (9, 2), (5, 4)])
def test_blob_centers_min_separation(L, d):
    C = blob_centers(L, d, 3.0)
    dist = np.linalg.norm(C[:, None] - C[None], axis=-1) + np.eye(L) * 1e9
    assert len({tuple(r) for r in C}) == L
    assert dist.min() > 0


def test_blob_sample_means_near_centers():
    ds = gen_blobs(3, 4000, 2, 2.0, make_rng(1))
    C = blob_centers(3, 2, 2.0)
    for k in range(3):
        m = ds.features[ds.labels_clean == k].mean(axis=0)
        # std of the mean is 1/sqrt(4000) ~ 0.016
        assert np.all(np.abs(m - C[k]) < 0.08)


def test_well_separated_blobs_are_linearly_separable():
    ds = gen_blobs(4, 250, 2, 8.0, make_rng(3))
    acc = LogisticRegression(max_iter=1000).fit(ds.features, ds.labels_clean).score(
        ds.features, ds.labels_clean)
    assert acc > 0.99


def test_blobs_invalid():
    with pytest.raises(InvalidInputError):
        gen_blobs(1, 10, 2, 1.0, make_rng(0))
    with pytest.raises(InvalidInputError):
        gen_blobs(3, 10, 2, 0.0, make_rng(0))


def test_spirals_size_and_noise_free_geometry():
    ds = gen_spirals(3, 300, 0.0, make_rng(0))
    assert len(ds) == 900 and ds.dim == 2
    t = np.tile(np.linspace(0.05, 1.0, 300), 3)
    r = np.linalg.norm(ds.features, axis=1)
    np.testing.assert_allclose(r, SPIRAL_RADIUS * t, rtol=0, atol=1e-12)
    ang = np.arctan2(ds.features[:, 1], ds.features[:, 0])
    expect = SPIRAL_TURN * t + 2 * np.pi * ds.labels_clean / 3
    diff = np.angle(np.exp(1j * (ang - expect)))
    assert np.max(np.abs(diff)) < 1e-9


def test_spirals_need_a_nonlinear_model():
    rng = make_rng(7)
    full = gen_spirals(3, 400, 0.2, rng)
    tr, va, te = split(full, 100, 300, rng)
    lin = LogisticRegression(max_iter=1000).fit(tr.features, tr.labels_observed)
    lin_acc = lin.score(te.features, te.labels_observed)
    cfg = TrainConfig(method="ce", epochs=100, batch_size=32, val_batch_size=100, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = train(cfg, tr, va, te, record_weights=False)
    mlp_acc = np.mean(np.argmax(predict_probs(res.params, te.features), 1) == te.labels_clean)
    assert mlp_acc - lin_acc >= 0.20


def test_symmetric_noise_exact_count():
    ds = gen_blobs(4, 250, 2, 2.0, make_rng(0))
    for frac in (0.0, 0.1, 0.37, 0.4, 1.0):
        noisy = inject_symmetric(ds, frac, make_rng(1))
        assert noisy.noise_mask.sum() == math.floor(frac * len(ds))
        np.testing.assert_array_equal(noisy.labels_clean, ds.labels_clean)
        np.testing.assert_array_equal(noisy.features, ds.features)


def test_symmetric_noise_flip_targets_uniform():
    ds = gen_blobs(5, 4000, 2, 2.0, make_rng(0))
    noisy = inject_symmetric(ds, 0.5, make_rng(2))
    m = noisy.noise_mask
    offset = (noisy.labels_observed[m] - noisy.labels_clean[m]) % 5
    counts = np.bincount(offset, minlength=5)
    assert counts[0] == 0
    assert stats.chisquare(counts[1:]).pvalue > 1e-3
    # which samples get corrupted is independent of class
    per_class = np.bincount(noisy.labels_clean[m], minlength=5)
    assert stats.chisquare(per_class).pvalue > 1e-3


def test_asymmetric_noise_maps_to_next_class():
    ds = gen_blobs(4, 50, 2, 2.0, make_rng(0))
    noisy = inject_asymmetric(ds, 0.3, make_rng(3))
    m = noisy.noise_mask
    assert m.sum() == 60
    np.testing.assert_array_equal(noisy.labels_observed[m], (ds.labels_clean[m] + 1) % 4)


def test_noise_fraction_validation():
    ds = gen_blobs(2, 5, 1, 1.0, make_rng(0))
    for f in (-0.1, 1.5):
        with pytest.raises(InvalidInputError):
            inject_symmetric(ds, f, make_rng(0))
        with pytest.raises(InvalidInputError):
            inject_asymmetric(ds, f, make_rng(0))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(1, 40), st.floats(0, 1), st.integers(0, 2**31))
def test_noise_invariants(L, per, frac, seed):
    ds = gen_blobs(L, per, 2, 1.0, make_rng(seed))
    noisy = inject_symmetric(ds, frac, make_rng(seed, "noise"))
    assert noisy.noise_mask.sum() == math.floor(frac * len(ds))
    assert noisy.labels_observed.min() >= 0 and noisy.labels_observed.max() < L


def test_split_disjoint_and_clean():
    ds = inject_symmetric(gen_blobs(4, 250, 2, 2.0, make_rng(0)), 0.4, make_rng(1))
    tr, va, te = split(ds, 50, 200, make_rng(2))
    assert (len(tr), len(va), len(te)) == (750, 50, 200)
    keys = [set(map(tuple, part.features)) for part in (tr, va, te)]
    assert not keys[0] & keys[1] and not keys[0] & keys[2] and not keys[1] & keys[2]
    assert not va.noise_mask.any() and not te.noise_mask.any()
    assert tr.noise_mask.sum() > 0


def test_split_deterministic_and_validated():
    ds = gen_blobs(3, 100, 2, 2.0, make_rng(0))
    a = split(ds, 20, 50, make_rng(4))
    b = split(ds, 20, 50, make_rng(4))
    assert all(x.features.tobytes() == y.features.tobytes() for x, y in zip(a, b))
    with pytest.raises(InvalidInputError):
        split(ds, 200, 100, make_rng(0))
    with pytest.raises(InvalidInputError):
        split(ds, 0, 10, make_rng(0))
    with pytest.warns(UserWarning):
        split(ds, 40, 10, make_rng(0))


def test_csv_roundtrip(tmp_path):
    ds = inject_symmetric(gen_blobs(3, 20, 2, 2.0, make_rng(0)), 0.3, make_rng(1))
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    assert path.read_text().splitlines()[0] == "f0,f1,label,clean_label,noisy"
    back = read_csv(path)
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels_observed, ds.labels_observed)
    np.testing.assert_array_equal(back.labels_clean, ds.labels_clean)


def test_csv_without_ground_truth(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("f0,label\n0.5,1\n-1.0,0\n")
    ds = read_csv(path)
    assert ds.num_classes == 2 and not ds.noise_mask.any()
    assert read_csv(path, num_classes=5).num_classes == 5


@pytest.mark.parametrize("text", ["", "f0,x\n1,2\n", "label\n1\n", "f0,label\n",
                                  "f0,label\nabc,1\n",
                                  "f0,label,clean_label,noisy\n1.0,1,1,1\n"])
def test_csv_rejects_malformed(tmp_path, text):
    path = tmp_path / "d.csv"
    path.write_text(text)
    with pytest.raises(InvalidInputError):
        read_csv(path)


def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((2, 1)), [0, 3], [0, 1], 2)
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((2, 1)), [0], [0], 2)
    with pytest.raises(InvalidInputError):
        Dataset(np.array([[np.nan], [0.0]]), [0, 1], [0, 1], 2)
