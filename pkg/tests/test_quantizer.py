from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidgen.quantizer import (
    Codebook,
    encode,
    encode_many,
    fit,
    level_inertia,
    read_codebook,
    reconstruct,
    write_codebook,
)


def random_vectors(n, d, seed=0):
    return np.random.default_rng(seed).normal(size=(n, d))


def brute_force_encode(codebook, x):
    """Independent oracle: plain python loops, per-level exhaustive scan."""
    residual = [float(v) for v in x]
    codes = []
    for level in range(codebook.m):
        best, best_dist = None, None
        for j in range(codebook.k):
            dist = sum((residual[i] - codebook.centroids[level, j, i]) ** 2
                       for i in range(codebook.d))
            if best_dist is None or dist < best_dist:
                best, best_dist = j, dist
        codes.append(best)
        residual = [residual[i] - codebook.centroids[level, best, i]
                    for i in range(codebook.d)]
    return tuple(codes)


def test_single_cluster_is_mean():
    x = random_vectors(50, 4, seed=1)
    codebook = fit(x, k=1, m=1, seed=0)
    np.testing.assert_allclose(codebook.centroids[0, 0], x.mean(axis=0), atol=1e-12)


def test_two_separated_duplicate_groups():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [4.0, 4.0], [4.0, 4.0]])
    codebook = fit(x, k=2, m=1, seed=0)
    centers = sorted(tuple(c) for c in codebook.centroids[0])
    assert centers == [(0.0, 0.0), (4.0, 4.0)]


def test_second_level_reduces_residual():
    x = random_vectors(1000, 8, seed=2)
    codebook = fit(x, k=4, m=2, seed=0)
    inertia = level_inertia(codebook, x)
    assert inertia[1] <= inertia[0]


def test_encode_exact_centroid_with_zero_lower_levels():
    centroids = np.zeros((3, 4, 2))
    centroids[0] = [[5, 5], [-5, 5], [1, 2], [3, -1]]
    # levels 2..M keep their zero centroids: zero residual selects index 0
    codebook = Codebook(centroids=centroids, fit_metadata={})
    assert encode(codebook, np.array([3.0, -1.0])) == (3, 0, 0)


def test_encode_nearest_of_two():
    centroids = np.array([[[0.0, 0.0], [1.0, 1.0]]])
    codebook = Codebook(centroids=centroids, fit_metadata={})
    assert encode(codebook, np.array([0.9, 1.1])) == (1,)


def test_encode_tie_breaks_to_smaller_index():
    centroids = np.array([[[1.0, 0.0], [-1.0, 0.0]]])
    codebook = Codebook(centroids=centroids, fit_metadata={})
    assert encode(codebook, np.array([0.0, 5.0])) == (0,)


def test_encode_matches_brute_force_oracle():
    x = random_vectors(1000, 8, seed=3)
    codebook = fit(x[:500], k=8, m=3, seed=0)
    for row in x:
        assert encode(codebook, row) == brute_force_encode(codebook, row)


def test_encode_many_agrees_with_encode():
    x = random_vectors(200, 6, seed=4)
    codebook = fit(x, k=5, m=3, seed=0)
    many = encode_many(codebook, x)
    for i, row in enumerate(x):
        assert tuple(many[i]) == encode(codebook, row)


def test_reconstruct_single_level_is_centroid():
    x = random_vectors(20, 4, seed=5)
    codebook = fit(x, k=3, m=1, seed=0)
    sid = encode(codebook, x[0])
    np.testing.assert_array_equal(reconstruct(codebook, sid),
                                  codebook.centroids[0, sid[0]])


def test_reconstruction_identity():
    x = random_vectors(1000, 8, seed=6)
    codebook = fit(x[:300], k=6, m=3, seed=0)
    for row in x[:100]:
        residual = row.copy()
        for level in range(codebook.m):
            c = int(((codebook.centroids[level] - residual) ** 2).sum(axis=1).argmin())
            residual = residual - codebook.centroids[level, c]
        direct = np.linalg.norm(row - reconstruct(codebook, encode(codebook, row)))
        assert abs(direct - np.linalg.norm(residual)) < 1e-9


def test_more_levels_reduce_reconstruction_error(world):
    x = world.embeddings
    errors = []
    for m in (1, 4):
        codebook = fit(x, k=8, m=m, seed=0)
        codes = encode_many(codebook, x)
        recon = np.stack([reconstruct(codebook, tuple(c)) for c in codes])
        errors.append(float(np.linalg.norm(x - recon, axis=1).mean()))
    assert errors[1] < errors[0]


def test_level_inertia_zero_for_exact_match():
    centroids = np.zeros((2, 2, 3))
    centroids[0, 0] = [1.0, 2.0, 3.0]
    centroids[0, 1] = [9.0, 9.0, 9.0]
    codebook = Codebook(centroids=centroids, fit_metadata={})
    assert level_inertia(codebook, np.array([[1.0, 2.0, 3.0]])) == [0.0, 0.0]


@pytest.mark.parametrize("k", [2, 8, 16])
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_level_inertia_non_increasing(k, m):
    x = random_vectors(400, 8, seed=7)
    codebook = fit(x, k=k, m=m, seed=0)
    inertia = level_inertia(codebook, x)
    assert all(inertia[i + 1] <= inertia[i] + 1e-12 for i in range(m - 1))


def test_k1_inertia_is_variance():
    x = random_vectors(100, 5, seed=8)
    codebook = fit(x, k=1, m=1, seed=0)
    expected = float(((x - x.mean(axis=0)) ** 2).sum(axis=1).mean())
    assert level_inertia(codebook, x)[0] == pytest.approx(expected, rel=1e-12)


def test_fit_reproducible_bitwise(tmp_path):
    x = random_vectors(300, 8, seed=9)
    a = fit(x, k=8, m=3, seed=42)
    b = fit(x, k=8, m=3, seed=42)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.fit_metadata == b.fit_metadata
    write_codebook(tmp_path / "a.txt", a)
    write_codebook(tmp_path / "b.txt", b)
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_coarse_to_fine_structure(world):
    # vectors sharing the first code should be more alike than random pairs
    x = world.embeddings
    codes = encode_many(world.codebook, x)
    rng = np.random.default_rng(0)
    shared, random_pairs = [], []
    for _ in range(2000):
        i, j = rng.integers(0, len(x), size=2)
        if i == j:
            continue
        sim = float(np.dot(x[i], x[j]))
        random_pairs.append(sim)
        if codes[i, 0] == codes[j, 0]:
            shared.append(sim)
    assert np.mean(shared) > np.mean(random_pairs)


def test_fit_rejects_bad_inputs():
    with pytest.raises(ValueError):
        fit(random_vectors(3, 4), k=5, m=1, seed=0)  # fewer than k vectors
    bad = random_vectors(10, 4)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        fit(bad, k=2, m=1, seed=0)
    with pytest.raises(ValueError):
        fit(random_vectors(10, 4), k=0, m=1, seed=0)
    with pytest.raises(ValueError):
        fit(random_vectors(10, 4), k=2, m=0, seed=0)


def test_encode_rejects_dimension_mismatch():
    codebook = fit(random_vectors(10, 4), k=2, m=1, seed=0)
    with pytest.raises(ValueError):
        encode(codebook, np.zeros(5))


def test_reconstruct_rejects_out_of_range():
    codebook = fit(random_vectors(10, 4), k=2, m=2, seed=0)
    with pytest.raises(ValueError):
        reconstruct(codebook, (0, 2))
    with pytest.raises(ValueError):
        reconstruct(codebook, (0,))


def test_codebook_file_round_trip(tmp_path):
    codebook = fit(random_vectors(100, 6, seed=10), k=4, m=2, seed=3)
    write_codebook(tmp_path / "cb.txt", codebook)
    loaded = read_codebook(tmp_path / "cb.txt")
    assert np.array_equal(loaded.centroids, codebook.centroids)
    assert loaded.fit_metadata == codebook.fit_metadata


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-100, max_value=100), min_size=4, max_size=4))
def test_encode_total_over_finite_vectors(values):
    codebook = fit(random_vectors(30, 4, seed=11), k=4, m=2, seed=0)
    sid = encode(codebook, np.array(values))
    assert len(sid) == 2
    assert all(0 <= c < 4 for c in sid)
