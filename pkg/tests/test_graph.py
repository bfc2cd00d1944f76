import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcl_lrr.errors import BundleFormatError, ConfigError, ContractError
from gcl_lrr.graph import (
    GraphBundle,
    NoisyLabels,
    SplitSpec,
    build_transition_matrix,
    generate_sbm,
    inject_attribute_noise,
    inject_label_noise,
    load_bundle,
    normalize_adjacency,
    one_hot,
    sample_split,
    save_bundle,
)
from helpers import random_bundle


def write_bundle_files(root, meta, edges, features, labels):
    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(json.dumps(meta))
    (root / "edges.csv").write_text(edges)
    (root / "features.csv").write_text(features)
    (root / "labels.csv").write_text(labels)


# ---------------------------------------------------------------- bundle I/O


def test_smallest_bundle(tmp_path):
    write_bundle_files(tmp_path, {"num_nodes": 2, "num_features": 1, "num_classes": 2},
                       "src,dst\n0,1\n", "0.5\n-1.5\n", "node,label\n0,0\n1,1\n")
    b = load_bundle(tmp_path)
    assert b.num_edges == 1
    assert b.edges.tolist() == [[0, 1]]
    np.testing.assert_array_equal(b.clean_labels, [[1, 0], [0, 1]])


def test_class_index_out_of_range(tmp_path):
    write_bundle_files(tmp_path, {"num_nodes": 6, "num_features": 1, "num_classes": 7},
                       "src,dst\n", "0\n" * 6, "node,label\n0,0\n5,9\n")
    with pytest.raises(BundleFormatError, match="class index out of range") as info:
        load_bundle(tmp_path)
    assert info.value.file == "labels.csv" and info.value.line == 3


@pytest.mark.parametrize(
    "edges, features, labels, fname",
    [
        ("src,dst\n0,5\n", "1\n2\n", "node,label\n0,0\n1,1\n", "edges.csv"),
        ("src,dst\n0,1\n1,0\n", "1\n2\n", "node,label\n0,0\n1,1\n", "edges.csv"),
        ("src,dst\n1,1\n", "1\n2\n", "node,label\n0,0\n1,1\n", "edges.csv"),
        ("src,dst\n0,x\n", "1\n2\n", "node,label\n0,0\n1,1\n", "edges.csv"),
        ("src,dst\n", "1\n", "node,label\n0,0\n1,1\n", "features.csv"),
        ("src,dst\n", "1\nabc\n", "node,label\n0,0\n1,1\n", "features.csv"),
        ("src,dst\n", "1\n2\n", "node,label\n0,0\n", "labels.csv"),
        ("src,dst\n", "1\n2\n", "node,label\n0,0\n0,1\n", "labels.csv"),
    ],
)
def test_malformed_bundles_name_the_file(tmp_path, edges, features, labels, fname):
    write_bundle_files(tmp_path, {"num_nodes": 2, "num_features": 1, "num_classes": 2},
                       edges, features, labels)
    with pytest.raises(BundleFormatError) as info:
        load_bundle(tmp_path)
    assert info.value.file == fname


def test_missing_file(tmp_path):
    write_bundle_files(tmp_path, {"num_nodes": 2, "num_features": 1, "num_classes": 2},
                       "src,dst\n", "1\n2\n", "node,label\n0,0\n1,1\n")
    (tmp_path / "features.csv").unlink()
    with pytest.raises(BundleFormatError, match="missing file"):
        load_bundle(tmp_path)


def test_round_trip_is_bit_exact(tmp_path, rng):
    b = random_bundle(rng, 15, 4, 3)
    b = b.replace(features=b.features * 1e-7 + np.pi, split=sample_split(15, 5, 1))
    save_bundle(b, tmp_path)
    back = load_bundle(tmp_path)
    assert back.features.tobytes() == b.features.tobytes()
    np.testing.assert_array_equal(back.edges, b.edges)
    np.testing.assert_array_equal(back.clean_labels, b.clean_labels)
    np.testing.assert_array_equal(back.split.labeled, b.split.labeled)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_round_trip_property(tmp_path_factory, n, d, c, seed):
    rng = np.random.default_rng(seed)
    b = random_bundle(rng, n, d, c)
    b = b.replace(features=rng.standard_normal((n, d)) * 10.0 ** rng.integers(-300, 300, size=(n, d)))
    path = tmp_path_factory.mktemp("rt")
    save_bundle(b, path)
    back = load_bundle(path)
    assert back.features.tobytes() == b.features.tobytes()
    np.testing.assert_array_equal(back.edges, b.edges)


def test_empty_edge_set_writes_header_only(tmp_path):
    b = GraphBundle(3, 1, 1, np.zeros((0, 2)), np.ones((3, 1)), np.ones((3, 1)))
    save_bundle(b, tmp_path)
    assert (tmp_path / "edges.csv").read_text() == "src,dst\n"


def test_zero_nodes_rejected(tmp_path):
    with pytest.raises(ConfigError):
        save_bundle(GraphBundle(0, 1, 1, np.zeros((0, 2)), np.zeros((0, 1)), np.zeros((0, 1))), tmp_path)


def test_bundle_invariants():
    with pytest.raises(ContractError):
        GraphBundle(2, 1, 2, [[0, 1], [1, 0]], np.zeros((2, 1)), one_hot([0, 1], 2))
    with pytest.raises(ContractError):
        GraphBundle(2, 1, 2, [], np.zeros((2, 1)), np.array([[1, 1], [0, 1]]))


# ---------------------------------------------------------------- adjacency


def test_two_node_path():
    b = GraphBundle(2, 1, 1, [[0, 1]], np.ones((2, 1)), np.ones((2, 1)))
    np.testing.assert_allclose(normalize_adjacency(b).matrix, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_isolated_node():
    b = GraphBundle(3, 1, 1, [[0, 1]], np.ones((3, 1)), np.ones((3, 1)))
    a = normalize_adjacency(b).matrix
    assert a[2, 2] == 1.0
    assert np.all(a[2, :2] == 0) and np.all(a[:2, 2] == 0)


@pytest.mark.parametrize("seed", range(5))
def test_normalized_spectrum_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 200))
    b = random_bundle(rng, n, 2, 2, p=float(rng.uniform(0.01, 0.5)))
    a = normalize_adjacency(b).matrix
    assert np.max(np.abs(a - a.T)) <= 1e-12
    w = np.linalg.eigvalsh(a)
    assert w.max() <= 1 + 1e-10 and w.min() >= -1 - 1e-10


def test_random_50_node_top_eigenvalue(rng):
    b = random_bundle(rng, 50, 2, 2, p=0.1)
    assert np.linalg.eigvalsh(normalize_adjacency(b).matrix).max() <= 1 + 1e-10


# ---------------------------------------------------------------- SBM


def test_sbm_degenerate_probabilities():
    b = generate_sbm(2, 3, 1.0, 0.0, 2, 1.0, seed=0)
    assert sorted(map(tuple, b.edges.tolist())) == [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]
    np.testing.assert_array_equal(b.labels, [0, 0, 0, 1, 1, 1])


def test_sbm_is_deterministic():
    a = generate_sbm(3, 10, 0.3, 0.05, 4, 2.0, seed=7)
    b = generate_sbm(3, 10, 0.3, 0.05, 4, 2.0, seed=7)
    assert a.features.tobytes() == b.features.tobytes()
    np.testing.assert_array_equal(a.edges, b.edges)


def test_sbm_within_block_density():
    b = generate_sbm(3, 100, 0.1, 0.01, 3, 1.0, seed=3)
    blk = b.labels
    within = np.sum(blk[b.edges[:, 0]] == blk[b.edges[:, 1]])
    pairs = 3 * 100 * 99 / 2
    assert abs(within / pairs - 0.1) <= 0.02


def test_sbm_feature_means():
    b = generate_sbm(2, 2000, 0.0, 0.0, 3, 4.0, seed=1)
    mean0 = b.features[b.labels == 0].mean(0)
    np.testing.assert_allclose(mean0, [4.0, 0.0, 0.0], atol=0.1)


@pytest.mark.parametrize("p_in, p_out", [(-0.1, 0.1), (0.5, 1.5)])
def test_sbm_rejects_bad_probability(p_in, p_out):
    with pytest.raises(ConfigError):
        generate_sbm(2, 3, p_in, p_out, 2, 1.0, seed=0)


# ---------------------------------------------------------------- transitions and noise


def test_symmetric_transition():
    t = build_transition_matrix("symmetric", 0.6, 3).matrix
    np.testing.assert_allclose(t[0], [0.4, 0.3, 0.3])


def test_asymmetric_transition():
    t = build_transition_matrix("asymmetric", 0.4, 3).matrix
    np.testing.assert_allclose(t[0], [0.6, 0.4, 0.0])
    np.testing.assert_allclose(t[2], [0.4, 0.0, 0.6])


@pytest.mark.parametrize("kind", ["symmetric", "asymmetric"])
def test_zero_rate_is_identity(kind):
    np.testing.assert_array_equal(build_transition_matrix(kind, 0.0, 4).matrix, np.eye(4))


def test_transition_needs_two_classes():
    with pytest.raises(ConfigError):
        build_transition_matrix("symmetric", 0.1, 1)


@given(st.sampled_from(["symmetric", "asymmetric"]), st.floats(0, 1), st.integers(2, 12))
def test_transition_rows_are_stochastic(kind, rate, c):
    t = build_transition_matrix(kind, rate, c).matrix
    np.testing.assert_allclose(t.sum(1), 1.0, atol=1e-12)
    assert np.all((t >= 0) & (t <= 1))
    assert np.all(np.diag(t) == 1.0 - rate)


def test_zero_rate_noise_is_clean(rng):
    clean = one_hot(rng.integers(0, 4, 50), 4)
    noisy = inject_label_noise(clean, build_transition_matrix("symmetric", 0.0, 4), seed=3)
    np.testing.assert_array_equal(noisy.observed, clean)
    assert not noisy.noise.any()


def test_symmetric_flip_rate():
    clean = one_hot(np.arange(10_000) % 5, 5)
    noisy = inject_label_noise(clean, build_transition_matrix("symmetric", 0.6, 5), seed=11)
    flipped = np.mean(np.argmax(noisy.observed, 1) != np.arange(10_000) % 5)
    assert abs(flipped - 0.6) <= 0.02
    np.testing.assert_array_equal(noisy.observed - noisy.noise, clean)


@pytest.mark.parametrize("kind, rate", [("symmetric", 0.3), ("asymmetric", 0.45)])
def test_empirical_transition_frequencies(kind, rate):
    c, per = 3, 10_000
    clean = one_hot(np.repeat(np.arange(c), per), c)
    t = build_transition_matrix(kind, rate, c)
    obs = np.argmax(inject_label_noise(clean, t, seed=5).observed, 1).reshape(c, per)
    freq = np.stack([np.bincount(obs[i], minlength=c) / per for i in range(c)])
    assert np.max(np.abs(freq - t.matrix)) <= 3 / np.sqrt(per)


def test_label_noise_is_deterministic_and_restricted(rng):
    clean = one_hot(rng.integers(0, 3, 200), 3)
    t = build_transition_matrix("symmetric", 0.9, 3)
    a = inject_label_noise(clean, t, seed=4, indices=np.arange(50))
    b = inject_label_noise(clean, t, seed=4, indices=np.arange(50))
    np.testing.assert_array_equal(a.observed, b.observed)
    np.testing.assert_array_equal(a.observed[50:], clean[50:])


def test_noisy_labels_reject_non_one_hot():
    with pytest.raises(ContractError):
        NoisyLabels(np.array([[1.0, 1.0]]), np.zeros((1, 2)))


def test_attribute_noise_zero_ratio(rng):
    x = rng.standard_normal((5, 7))
    np.testing.assert_array_equal(inject_attribute_noise(x, 0.0, seed=1), x)


def test_attribute_noise_full_ratio_permutes_rows(rng):
    x = rng.standard_normal((20, 6))
    y = inject_attribute_noise(x, 1.0, seed=1)
    np.testing.assert_array_equal(np.sort(y, 1), np.sort(x, 1))
    assert not np.array_equal(x, y)


def test_attribute_noise_selects_ceil_count():
    x = np.tile(np.arange(10.0), (200, 1))
    y = inject_attribute_noise(x, 0.5, seed=2)
    # a permutation of 5 coordinates moves at most 5 values
    assert np.all((y != x).sum(1) <= 5)
    assert np.max((y != x).sum(1)) == 5
    np.testing.assert_array_equal(np.sort(y, 1), x)


def test_attribute_noise_rows_and_determinism(rng):
    x = rng.standard_normal((10, 8))
    a = inject_attribute_noise(x, 0.5, seed=3, rows=[1, 2])
    np.testing.assert_array_equal(a, inject_attribute_noise(x, 0.5, seed=3, rows=[1, 2]))
    np.testing.assert_array_equal(np.delete(a, [1, 2], 0), np.delete(x, [1, 2], 0))


# ---------------------------------------------------------------- splits


def test_split_basic():
    s = sample_split(10, 4, seed=0)
    assert s.m == 4 and s.u == 6
    assert set(s.labeled) | set(s.unlabeled) == set(range(10))
    assert not set(s.labeled) & set(s.unlabeled)


def test_split_max_m():
    assert sample_split(10, 9, seed=0).u == 1


@pytest.mark.parametrize("m", [0, 10, -1])
def test_split_range(m):
    with pytest.raises(ConfigError):
        sample_split(10, m, seed=0)


def test_split_frequencies():
    counts = np.zeros(5)
    for s in range(10_000):
        counts[sample_split(5, 2, seed=s).labeled] += 1
    np.testing.assert_allclose(counts / 10_000, 0.4, atol=0.02)


def test_split_rejects_overlap():
    with pytest.raises(ContractError):
        SplitSpec([0, 1], [1, 2])
