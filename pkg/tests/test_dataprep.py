import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotlatent import dataprep as dp

NBAIOT_CLASSES = ["normal", "Scan", "junk", "Combo", "tcp flood", "udp flood", "SYN flood", "ACK flood", "udpplains"]
CICIOT_CLASSES = ["Normal", "HTTP flood", "TCP flood", "UDP flood", "Brute force"]


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


def test_load_csv_drops_rows_with_missing_cells(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["f1", "f2", "label"], [[1, 2, "a"], [3, "", "b"], [5, 6, "a"]])
    ds = dp.load_csv(p, "label")
    assert ds.n == 2 and ds.dropped_rows == 1
    np.testing.assert_array_equal(ds.features, [[1, 2], [5, 6]])
    assert ds.label_map == {"a": 0}


def test_load_csv_unparseable_and_nonfinite_cells(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["f1", "label"], [[1, "x"], ["abc", "y"], ["inf", "y"], ["nan", "x"], [2, "y"]])
    ds = dp.load_csv(p, "label")
    assert ds.n == 2 and ds.dropped_rows == 3
    assert ds.label_map == {"x": 0, "y": 1}


@pytest.mark.parametrize("classes", [NBAIOT_CLASSES, CICIOT_CLASSES])
def test_label_factorisation_counts(tmp_path, classes):
    rng = np.random.default_rng(0)
    rows = [[*rng.standard_normal(3).round(4), classes[i % len(classes)]] for i in range(4 * len(classes))]
    ds = dp.load_csv(write_csv(tmp_path / "d.csv", ["a", "b", "c", "subcategory"], rows), "subcategory")
    assert ds.num_classes == len(classes)
    assert list(ds.label_map) == classes  # first-appearance order
    assert sorted(set(ds.labels.tolist())) == list(range(len(classes)))


def test_load_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        dp.load_csv(tmp_path / "missing.csv", "label")
    p = write_csv(tmp_path / "ragged.csv", ["a", "label"], [[1, "x"], [1, 2, "x"]])
    with pytest.raises(dp.DataError, match="expected 2 fields"):
        dp.load_csv(p, "label")
    p = write_csv(tmp_path / "empty.csv", ["a", "label"], [["", "x"]])
    with pytest.raises(dp.DataError, match="no usable rows"):
        dp.load_csv(p, "label")
    p = write_csv(tmp_path / "nolabel.csv", ["a", "b"], [[1, 2]])
    with pytest.raises(dp.DataError):
        dp.load_csv(p, "label")


def test_load_csv_drops_text_columns_before_parsing(tmp_path):
    p = write_csv(tmp_path / "ip.csv", ["src_ip", "dst_ip", "f", "label"],
                  [["10.0.0.1", "10.0.0.2", 1.5, "n"], ["10.0.0.3", "10.0.0.4", 2.5, "a"]])
    ds = dp.load_csv(p, "label", drop=["src_ip", "dst_ip"])
    assert ds.feature_names == ["f"] and ds.n == 2


def _table(d, n=3):
    return dp.Dataset(np.arange(n * d, dtype=float).reshape(n, d), np.zeros(n, int),
                      [f"c{i}" for i in range(d)], {"x": 0})


def test_drop_fields():
    names = ["src_ip", "dst_ip", "pkt_no", "seq_id"]
    ds = _table(88)
    ds.feature_names[10:14] = names
    out = dp.drop_fields(ds, names)
    assert out.d == 84
    assert out.feature_names == [n for n in ds.feature_names if n not in names]
    np.testing.assert_array_equal(out.features[:, 10], ds.features[:, 14])
    same = dp.drop_fields(ds, [])
    np.testing.assert_array_equal(same.features, ds.features)
    with pytest.raises(dp.DataError):
        dp.drop_fields(ds, ["nope"])


def test_clean_is_idempotent():
    ds = _table(4, n=5)
    ds.features[2, 1] = np.nan  # bypasses validation, as raw ingestion could
    once = dp.clean(ds)
    twice = dp.clean(once)
    assert once.n == 4 and once.dropped_rows == 1
    np.testing.assert_array_equal(once.features, twice.features)


@pytest.mark.parametrize("d, expected", [(7, 8), (115, 115), (84, 84), (2, 3), (4, 4), (97, 98)])
def test_pad_to_composite(d, expected):
    assert dp.pad_to_composite(d) == expected


def test_corpus_image_and_patch_geometry():
    rng = np.random.default_rng(0)
    for d, (r, k), (pr, pc), count in [(115, (5, 23), (5, 1), 23), (84, (6, 14), (2, 2), 21)]:
        assert dp.factor_pair(d) == (r, k)
        rec = rng.standard_normal(d)
        img = dp.reshape_to_image(rec, r, k)
        assert img.pixels.shape == (r, k, 1)
        seq = dp.extract_patches(img, pr, pc)
        assert len(seq) == count and seq.patches.shape[1:] == (pr, pc, 1)


def test_reshape_is_row_major():
    img = dp.reshape_to_image(np.arange(6.0), 2, 3)
    assert img.pixels[1, 0, 0] == 3.0
    with pytest.raises(dp.DataError):
        dp.reshape_to_image(np.arange(6.0), 4, 2)


def test_patch_order_and_contents():
    img = dp.reshape_to_image(np.arange(24.0), 4, 6)
    seq = dp.extract_patches(img, 2, 3)
    assert len(seq) == 4
    np.testing.assert_array_equal(seq.patches[1, :, :, 0], [[3, 4, 5], [9, 10, 11]])
    np.testing.assert_array_equal(seq.patches[2, :, :, 0], [[12, 13, 14], [18, 19, 20]])
    with pytest.raises(dp.DataError):
        dp.extract_patches(img, 3, 3)


def test_factor_pair_most_square():
    assert dp.factor_pair(12) == (3, 4)
    assert dp.factor_pair(8) == (2, 4)
    assert dp.factor_pair(36) == (6, 6)
    with pytest.raises(dp.DataError):
        dp.factor_pair(13)


@st.composite
def geometry(draw):
    gr, gc = draw(st.integers(1, 4)), draw(st.integers(1, 4))
    pr, pc = draw(st.integers(1, 4)), draw(st.integers(1, 4))
    return gr * pr, gc * pc, pr, pc


@settings(max_examples=80, deadline=None)
@given(geometry(), st.integers(0, 2**32 - 1))
def test_patch_round_trip_and_count(geo, seed):
    r, k, pr, pc = geo
    rec = np.random.default_rng(seed).standard_normal(r * k)
    img = dp.reshape_to_image(rec, r, k)
    seq = dp.extract_patches(img, pr, pc)
    assert len(seq) == (r // pr) * (k // pc)
    back = dp.reassemble(seq)
    np.testing.assert_array_equal(back.pixels, img.pixels)
    np.testing.assert_array_equal(back.flatten(), rec)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 60), st.integers(0, 2**32 - 1))
def test_full_transform_round_trip(d, seed):
    rec = np.random.default_rng(seed).standard_normal(d)
    padded = dp.pad_features(rec)
    r, k = dp.factor_pair(padded.size)
    seq = dp.extract_patches(dp.reshape_to_image(padded, r, k), r, 1)
    out = dp.unpad(dp.reassemble(seq).flatten(), d)
    np.testing.assert_array_equal(out, rec)
    assert (padded[d:] == 0).all()


def test_patch_matrix_matches_single_record_path():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((4, 84))
    batch = dp.patch_matrix(X, (6, 14), (2, 2))
    assert batch.shape == (4, 21, 4)
    for i in range(4):
        seq = dp.extract_patches(dp.reshape_to_image(X[i], 6, 14), 2, 2)
        np.testing.assert_array_equal(batch[i], seq.flat())


def test_standardize():
    tr = dp.Dataset(np.array([[0.0, 5.0], [2.0, 5.0]]), [0, 0], ["a", "b"], {"x": 0})
    te = dp.Dataset(np.array([[4.0, 6.0]]), [0], ["a", "b"], {"x": 0})
    tr2, te2, sc = dp.standardize(tr, te)
    np.testing.assert_array_equal(tr2.features[:, 0], [-1.0, 1.0])
    np.testing.assert_array_equal(tr2.features[:, 1], [0.0, 0.0])  # constant column: unit scale
    np.testing.assert_array_equal(te2.features[0], [3.0, 1.0])
    assert sc.std[1] == 1.0


def test_standardize_statistics_recomputed():
    rng = np.random.default_rng(4)
    tr = dp.Dataset(rng.normal(3, 7, (200, 6)), np.zeros(200, int), list("abcdef"), {"x": 0})
    out, _, _ = dp.standardize(tr)
    assert np.abs(out.features.mean(axis=0)).max() <= 1e-9
    assert np.abs(out.features.std(axis=0) - 1).max() <= 1e-9


def test_split_balanced():
    ds = dp.Dataset(np.zeros((100, 2)), np.repeat([0, 1], 50), ["a", "b"], {"x": 0, "y": 1})
    tr, te = dp.split(ds, dp.SplitSpec(0.2, seed=3))
    assert np.bincount(te.labels).tolist() == [10, 10]
    assert tr.n == 80


def test_split_deterministic_disjoint_exhaustive():
    ds = dp.gen_synthetic(9, 5, 37, 1.0, seed=0)
    ds.features[:, 0] = np.arange(ds.n)  # row ids
    a_tr, a_te = dp.split(ds, dp.SplitSpec(0.3, seed=11))
    b_tr, b_te = dp.split(ds, dp.SplitSpec(0.3, seed=11))
    np.testing.assert_array_equal(a_te.features, b_te.features)
    ids_tr, ids_te = set(a_tr.features[:, 0]), set(a_te.features[:, 0])
    assert not ids_tr & ids_te and len(ids_tr | ids_te) == ds.n
    for c in range(9):
        size = (ds.labels == c).sum()
        assert abs((a_te.labels == c).sum() - 0.3 * size) <= 1
    assert a_tr.label_map == ds.label_map


def test_split_singleton_class_rejected():
    ds = dp.Dataset(np.zeros((3, 2)), [0, 0, 1], ["a", "b"], {"x": 0, "y": 1})
    with pytest.raises(dp.DataError):
        dp.split(ds, dp.SplitSpec(0.5))


def nearest_centroid_accuracy(train, test):
    cent = np.stack([train.features[train.labels == c].mean(axis=0) for c in range(train.num_classes)])
    dist = ((test.features[:, None, :] - cent[None]) ** 2).sum(-1)
    return (dist.argmin(axis=1) == test.labels).mean()


def test_synthetic_separable_nearest_centroid():
    ds = dp.gen_synthetic(3, 115, 200, 10.0, seed=0)
    tr, te = dp.split(ds, dp.SplitSpec(0.3, seed=0))
    assert nearest_centroid_accuracy(tr, te) >= 0.99


def test_synthetic_zero_separation_is_chance():
    ds = dp.gen_synthetic(4, 20, 400, 0.0, seed=1)
    tr, te = dp.split(ds, dp.SplitSpec(0.5, seed=1))
    assert abs(nearest_centroid_accuracy(tr, te) - 0.25) < 0.06


def test_synthetic_deterministic_and_subspace():
    a = dp.gen_synthetic(9, 115, 500, 10.0, seed=7, informative_rank=6)
    b = dp.gen_synthetic(9, 115, 500, 10.0, seed=7, informative_rank=6)
    assert a.features.tobytes() == b.features.tobytes()
    means = np.stack([a.features[a.labels == c].mean(0) for c in range(9)])
    sv = np.linalg.svd(means - means.mean(0), compute_uv=False)
    assert sv[6] < 0.2 * sv[5]  # class structure lives in 6 directions


def test_dataset_file_round_trip(tmp_path):
    ds = dp.gen_synthetic(3, 7, 5, 2.0, seed=0)
    tr, _, sc = dp.standardize(ds)
    tr.image_shape = (2, 4)
    dp.save_dataset(tr, tmp_path / "x.ds")
    back = dp.load_dataset(tmp_path / "x.ds")
    assert back.features.tobytes() == tr.features.tobytes()
    np.testing.assert_array_equal(back.labels, tr.labels)
    assert back.label_map == tr.label_map and back.image_shape == (2, 4)
    assert back.scaler.mean.tobytes() == sc.mean.tobytes()
    raw = (tmp_path / "x.ds").read_bytes()
    (tmp_path / "t.ds").write_bytes(raw[:-3])
    with pytest.raises(dp.DataError):
        dp.load_dataset(tmp_path / "t.ds")
    (tmp_path / "v.ds").write_bytes(raw[:6] + b"\x09" + raw[7:])
    with pytest.raises(dp.DataError, match="version"):
        dp.load_dataset(tmp_path / "v.ds")
