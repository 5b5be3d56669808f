import json

import numpy as np
import pytest

from a3gcn import data
from a3gcn.data import (DimensionMismatchError, EdgeFormatError, LabelRangeError, MissingFileError,
                        SplitError, generate_sbm, inject_noisy_edges, load_bundle, make_label_rate_split,
                        write_bundle)
from a3gcn.config import make_config
from a3gcn.ensemble import run_trial
from a3gcn.rng import Stream, make_rng, trial_seed


def test_bundle_round_trip(small_sbm, tmp_path):
    write_bundle(small_sbm, tmp_path / "b")
    back = load_bundle(tmp_path / "b")
    assert back == small_sbm
    np.testing.assert_array_equal(back.features, small_sbm.features)


@pytest.fixture
def bundle(small_sbm, tmp_path):
    return write_bundle(small_sbm, tmp_path / "b")


def test_missing_file(bundle):
    (bundle / "labels.csv").unlink()
    with pytest.raises(MissingFileError):
        load_bundle(bundle)


def test_feature_rows_mismatch(bundle):
    lines = (bundle / "features.csv").read_text().splitlines()
    (bundle / "features.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DimensionMismatchError):
        load_bundle(bundle)


def test_feature_columns_mismatch(bundle):
    meta = json.loads((bundle / "meta.json").read_text())
    meta["feature_dim"] += 1
    (bundle / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DimensionMismatchError):
        load_bundle(bundle)


def test_label_out_of_range(bundle):
    lines = (bundle / "labels.csv").read_text().splitlines()
    lines[0] = "99"
    (bundle / "labels.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(LabelRangeError):
        load_bundle(bundle)


@pytest.mark.parametrize("row", ["3,3", "5,2", "0,100000", "1"])
def test_bad_edges(bundle, row):
    with open(bundle / "edges.csv", "a") as fh:
        fh.write(row + "\n")
    with pytest.raises(EdgeFormatError):
        load_bundle(bundle)


def test_overlapping_splits(bundle):
    s = json.loads((bundle / "splits.json").read_text())
    s["test"].append(s["train"][0])
    (bundle / "splits.json").write_text(json.dumps(s))
    with pytest.raises(SplitError):
        load_bundle(bundle)


def test_row_normalize():
    x = np.array([[1.0, 3.0], [0.0, 0.0]])
    np.testing.assert_array_equal(data.row_normalize(x), [[0.25, 0.75], [0.0, 0.0]])


# ---------------------------------------------------------------- generator

def test_sbm_no_cross_edges():
    ds = generate_sbm(90, 3, 0.2, 0.0, 6, 0.1, make_rng(0))
    assert np.all(ds.labels[ds.edges[:, 0]] == ds.labels[ds.edges[:, 1]])


def test_sbm_shape_and_split(sbm_fixture):
    ds = sbm_fixture
    assert ds.num_nodes == 400 and ds.num_classes == 4
    assert np.bincount(ds.labels).tolist() == [100] * 4
    assert ds.train.size == 80
    assert np.bincount(ds.labels[ds.train]).tolist() == [20] * 4
    parts = [set(a.tolist()) for a in (ds.train, ds.val, ds.test)]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert sum(len(p) for p in parts) == 400


def test_sbm_edge_count_within_three_sigma():
    n, c, pi, po = 400, 4, 0.05, 0.005
    sizes = np.full(c, n // c)
    intra = int((sizes * (sizes - 1) // 2).sum())
    inter = n * (n - 1) // 2 - intra
    mean = intra * pi + inter * po
    sd = np.sqrt(intra * pi * (1 - pi) + inter * po * (1 - po))
    for seed in range(5):
        ds = generate_sbm(n, c, pi, po, 8, 1.0, make_rng(seed, Stream.SBM))
        assert abs(ds.num_edges - mean) < 3 * sd


def test_sbm_same_seed_identical():
    a = generate_sbm(60, 3, 0.2, 0.02, 5, 1.0, make_rng(3, Stream.SBM))
    b = generate_sbm(60, 3, 0.2, 0.02, 5, 1.0, make_rng(3, Stream.SBM))
    assert a == b


def test_sbm_rejects_bad_probability():
    with pytest.raises(ValueError):
        generate_sbm(10, 2, 1.5, 0.0, 4, 1.0, make_rng(0))


@pytest.mark.slow
def test_plain_gcn_learns_sbm(sbm_fixture):
    cfg = make_config(variant="baseline-gcn")
    accs = [run_trial(cfg, sbm_fixture, trial_seed(0, t)).test_acc for t in range(5)]
    assert min(accs) > 0.75


# ---------------------------------------------------------------- perturbations

def test_label_rate_one_per_class(sbm_fixture):
    ds = make_label_rate_split(sbm_fixture, 1, make_rng(0))
    assert ds.train.size == ds.num_classes
    assert sorted(ds.labels[ds.train].tolist()) == list(range(ds.num_classes))
    tr, va, te = (set(a.tolist()) for a in (ds.train, ds.val, ds.test))
    assert not (tr & va or tr & te or va & te)
    assert len(tr | va | te) == ds.num_nodes
    np.testing.assert_array_equal(ds.val, sbm_fixture.val)


def test_label_rate_too_many(small_sbm):
    with pytest.raises(ValueError):
        make_label_rate_split(small_sbm, 1000, make_rng(0))


def _intra(ds):
    return ds.edges[ds.labels[ds.edges[:, 0]] == ds.labels[ds.edges[:, 1]]]


def test_noise_zero_keeps_only_intra(sbm_fixture):
    ds = inject_noisy_edges(sbm_fixture, 0.0, make_rng(0))
    np.testing.assert_array_equal(ds.edges, _intra(sbm_fixture))


@pytest.mark.parametrize("q", [0.5, 1.5, 20.0])
def test_noise_exact_counts(sbm_fixture, q):
    clean = _intra(sbm_fixture)
    ds = inject_noisy_edges(sbm_fixture, q, make_rng(1, Stream.NOISE))
    y = ds.labels
    cross = ds.edges[y[ds.edges[:, 0]] != y[ds.edges[:, 1]]]
    assert cross.shape[0] == int(np.floor(q * clean.shape[0]))
    np.testing.assert_array_equal(_intra(ds), clean)
    assert np.unique(ds.edges, axis=0).shape[0] == ds.edges.shape[0]


def test_noise_exhausted_pairs(small_sbm):
    with pytest.raises(ValueError):
        inject_noisy_edges(small_sbm, 1e6, make_rng(0))


def test_embedding_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((7, 3))
    lab = rng.integers(0, 3, 7)
    hc, ag = rng.random(7) < 0.5, rng.random(7) < 0.5
    p = data.export_embeddings(m, lab, hc, ag, tmp_path / "e" / "emb.csv")
    assert p.read_text().splitlines()[0] == "node,h0,h1,h2,label,high_conf,agreed"
    m2, l2, h2, a2 = data.read_embeddings(p)
    np.testing.assert_array_equal(m2, m)
    np.testing.assert_array_equal(l2, lab)
    np.testing.assert_array_equal(h2, hc)
    np.testing.assert_array_equal(a2, ag)
