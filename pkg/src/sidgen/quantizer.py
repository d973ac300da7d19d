"""Residual K-Means codebooks for encoding embeddings into semantic IDs.

Level 1 runs K-Means over the raw embeddings; each later level runs K-Means
over the residual error left by the previous one, so codes refine coarse to
fine. Fitting is deterministic: k-means++ seeding from a single RNG, Lloyd
iterations to an assignment fixpoint, empty clusters reseeded to the point
with the largest current residual, ties broken by smallest index everywhere.
Refitting with identical inputs reproduces the codebook bit for bit.

Distances are computed as ((x - c)**2).sum(), not the expanded dot-product
form, so encode agrees exactly with a brute-force nearest-centroid oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

# A semantic ID is the per-level code tuple (c_1, ..., c_M), each in [0, K).
SemanticId = tuple[int, ...]

CODEBOOK_FORMAT = "sidgen.codebook"


@dataclass(frozen=True)
class Codebook:
    """M levels of K centroids each, plus how the fit went."""

    centroids: np.ndarray  # (M, K, d) float64
    fit_metadata: dict[str, Any]

    @property
    def m(self) -> int:
        return self.centroids.shape[0]

    @property
    def k(self) -> int:
        return self.centroids.shape[1]

    @property
    def d(self) -> int:
        return self.centroids.shape[2]


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # x: (n, d) or (d,); centers: (k, d) -> (n, k) or (k,)
    if x.ndim == 1:
        return ((centers - x) ** 2).sum(axis=1)
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = x[idx]
        d2 = np.minimum(d2, _sq_dists(x, centers[j:j + 1])[:, 0])
    return centers


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator,
           max_iters: int) -> tuple[np.ndarray, int, float]:
    centers = _kmeans_pp(x, k, rng)
    assign = np.full(x.shape[0], -1)
    iterations = 0
    for _ in range(max_iters):
        d2 = _sq_dists(x, centers)
        new_assign = d2.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        iterations += 1
        for j in range(k):
            members = x[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
        empties = [j for j in range(k) if not (assign == j).any()]
        if empties:
            residual = _sq_dists(x, centers)[np.arange(x.shape[0]), assign].copy()
            for j in empties:
                far = int(residual.argmax())
                centers[j] = x[far]
                residual[far] = -1.0  # each empty cluster takes a distinct point
    final_d2 = _sq_dists(x, centers)
    inertia = float(final_d2.min(axis=1).mean())
    return centers, iterations, inertia


def fit(embeddings: Sequence[np.ndarray] | np.ndarray, k: int, m: int,
        seed: int, max_iters: int = 50) -> Codebook:
    """Fit M residual K-Means levels over the given vectors."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("embeddings contain non-finite values")
    if k < 1 or m < 1:
        raise ValueError(f"k and m must be >= 1, got k={k} m={m}")
    if x.shape[0] < k:
        raise ValueError(f"need at least k={k} vectors, got {x.shape[0]}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    rng = np.random.default_rng(seed)
    residual = x.copy()
    levels = np.empty((m, k, x.shape[1]))
    iters: list[int] = []
    inertia: list[float] = []
    for level in range(m):
        centers, n_iter, level_inertia_ = _lloyd(residual, k, rng, max_iters)
        levels[level] = centers
        iters.append(n_iter)
        inertia.append(level_inertia_)
        codes = _sq_dists(residual, centers).argmin(axis=1)
        residual = residual - centers[codes]

    meta = {
        "seed": seed,
        "max_iters": max_iters,
        "iterations": iters,
        "inertia": inertia,
        "residual_normalization": "none",
    }
    return Codebook(centroids=levels, fit_metadata=meta)


def encode(codebook: Codebook, x: np.ndarray) -> SemanticId:
    """Quantize one vector: per level, nearest centroid, then subtract it."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (codebook.d,):
        raise ValueError(f"expected vector of dim {codebook.d}, got shape {x.shape}")
    residual = x.copy()
    codes = []
    for level in range(codebook.m):
        centers = codebook.centroids[level]
        c = int(_sq_dists(residual, centers).argmin())
        codes.append(c)
        residual -= centers[c]
    return tuple(codes)


def encode_many(codebook: Codebook, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Vectorized encode for an (n, d) array; returns (n, M) int codes."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != codebook.d:
        raise ValueError(f"expected (n, {codebook.d}) array, got shape {x.shape}")
    n = x.shape[0]
    codes = np.empty((n, codebook.m), dtype=np.int64)
    for start in range(0, n, chunk):
        residual = x[start:start + chunk].copy()
        for level in range(codebook.m):
            centers = codebook.centroids[level]
            c = _sq_dists(residual, centers).argmin(axis=1)
            codes[start:start + residual.shape[0], level] = c
            residual -= centers[c]
    return codes


def reconstruct(codebook: Codebook, sid: SemanticId) -> np.ndarray:
    """Sum of the selected centroids; inverse of the residual decomposition."""
    if len(sid) != codebook.m:
        raise ValueError(f"sid has {len(sid)} codes, codebook has {codebook.m} levels")
    out = np.zeros(codebook.d)
    for level, code in enumerate(sid):
        if not 0 <= code < codebook.k:
            raise ValueError(f"code {code} out of range [0, {codebook.k}) at level {level + 1}")
        out += codebook.centroids[level, code]
    return out


def level_inertia(codebook: Codebook, embeddings: np.ndarray) -> list[float]:
    """Mean squared residual norm after each level, over the given vectors."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != codebook.d:
        raise ValueError(f"expected (n, {codebook.d}) array, got shape {x.shape}")
    residual = x.copy()
    out = []
    for level in range(codebook.m):
        centers = codebook.centroids[level]
        codes = _sq_dists(residual, centers).argmin(axis=1)
        residual = residual - centers[codes]
        out.append(float((residual ** 2).sum(axis=1).mean()))
    return out


def write_codebook(path: str | Path, codebook: Codebook) -> None:
    """Text format: JSON header, then one centroid per line in level-major,
    index-major order. repr() floats round-trip exactly, so rewriting an
    identical fit yields identical bytes."""
    header = {
        "format": CODEBOOK_FORMAT,
        "version": 1,
        "d": codebook.d,
        "k": codebook.k,
        "m": codebook.m,
        "fit_metadata": codebook.fit_metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for level in range(codebook.m):
            for j in range(codebook.k):
                fh.write(" ".join(repr(float(v)) for v in codebook.centroids[level, j]))
                fh.write("\n")


def read_codebook(path: str | Path) -> Codebook:
    from .artifacts import ArtifactError

    with open(path, "r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"{path}: unreadable header: {exc}") from exc
        if header.get("format") != CODEBOOK_FORMAT or header.get("version") != 1:
            raise ArtifactError(f"{path}: not a v1 {CODEBOOK_FORMAT} file")
        d, k, m = header["d"], header["k"], header["m"]
        centroids = np.empty((m, k, d))
        for level in range(m):
            for j in range(k):
                row = fh.readline().split()
                if len(row) != d:
                    raise ArtifactError(f"{path}: truncated centroid at level {level} index {j}")
                centroids[level, j] = [float(v) for v in row]
    return Codebook(centroids=centroids, fit_metadata=header["fit_metadata"])
