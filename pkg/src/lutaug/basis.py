"""Basis-LUT construction: a procedural LUT collection (stand-in for a
downloaded LUT pack), deterministic k-means clustering over flattened LUT
entries, and basis initialization (identity + cluster centers)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lut import Lut3D, identity_lut, parse_cube, DEFAULT_SIZE


@dataclass(frozen=True)
class LutCollection:
    luts: list[Lut3D]
    provenance: list[str]

    def __post_init__(self):
        if not self.luts:
            raise ValueError("LUT collection must be non-empty")
        size = self.luts[0].size
        if any(l.size != size for l in self.luts):
            raise ValueError("all LUTs in a collection must share one size")
        if len(self.provenance) != len(self.luts):
            raise ValueError("one provenance tag per LUT required")

    @property
    def size(self) -> int:
        return self.luts[0].size

    def __len__(self) -> int:
        return len(self.luts)


@dataclass(frozen=True)
class BasisSet:
    """Exactly L LUTs; index 0 is the identity at initialization time."""

    luts: list[Lut3D]

    def __post_init__(self):
        if len(self.luts) < 2:
            raise ValueError("basis needs at least 2 LUTs")
        size = self.luts[0].size
        if any(l.size != size for l in self.luts):
            raise ValueError("basis LUTs must share one size")

    @property
    def size(self) -> int:
        return self.luts[0].size

    def __len__(self) -> int:
        return len(self.luts)


@dataclass(frozen=True)
class KMeansConfig:
    max_iters: int = 100
    tol: float = 1e-8
    seed: int = 0


@dataclass(frozen=True)
class KMeansResult:
    centers: list[Lut3D]
    labels: np.ndarray
    inertia: float
    n_iters: int
    inertia_history: list[float] = field(default_factory=list)


def tone_lut(
    size: int,
    gamma: np.ndarray,
    gain: np.ndarray,
    lift: np.ndarray,
    mix: np.ndarray,
) -> Lut3D:
    """LUT realizing per-channel tone curves lift + gain * x^gamma followed by
    a channel mixing matrix (rows applied to the curved RGB vector)."""
    base = identity_lut(size).table  # (S,S,S,3), channels (r,g,b)
    curved = lift + gain * np.power(base, gamma)
    return Lut3D(curved @ np.asarray(mix, dtype=np.float64).T)


def generate_seed_collection(
    n: int, size: int = DEFAULT_SIZE, seed: int = 0
) -> LutCollection:
    """Deterministic procedural collection of n smooth, per-channel-monotone
    color LUTs (randomized tone curves plus mild channel cross-mixing)."""
    if n < 1:
        raise ValueError(f"collection size must be >= 1, got {n}")
    rng = np.random.Generator(np.random.Philox(seed))
    luts = []
    tags = []
    for i in range(n):
        gamma = rng.uniform(0.5, 2.0, size=3)
        gain = rng.uniform(0.7, 1.3, size=3)
        lift = rng.uniform(-0.1, 0.1, size=3)
        off = rng.uniform(0.0, 0.15, size=(3, 3))
        np.fill_diagonal(off, 0.0)
        mix = np.eye(3) + off
        mix /= mix.sum(axis=1, keepdims=True)  # rows sum to 1, all entries >= 0
        luts.append(tone_lut(size, gamma, gain, lift, mix))
        tags.append(f"seed:{seed}/{i}")
    return LutCollection(luts, tags)


def load_collection_from_dir(path: str | Path) -> LutCollection:
    """Load every .cube file in a directory (sorted by name) as a collection."""
    path = Path(path)
    files = sorted(path.glob("*.cube"))
    if not files:
        raise ValueError(f"no .cube files found in {path}")
    luts = [parse_cube(f.read_text()) for f in files]
    return LutCollection(luts, [str(f) for f in files])


def _plusplus_seed(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ D^2 seeding; degenerate all-zero distance draws fall back to
    the lowest-index unchosen point."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            remaining = [i for i in range(n) if i not in chosen]
            chosen.append(remaining[0])
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, np.sum((X - X[chosen[-1]]) ** 2, axis=1))
    return X[chosen].copy()


_EXACT_LIMIT = 4096  # max assignments to enumerate for the exact solver


def _kmeans_exact(X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Globally optimal k-means on a tiny instance by enumerating every
    surjective assignment; ties go to the first assignment in enumeration
    order."""
    best = (np.inf, None, None)
    for assign in itertools.product(range(k), repeat=len(X)):
        labels = np.asarray(assign)
        if len(np.unique(labels)) != k:
            continue
        centers = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
        sse = float(((X - centers[labels]) ** 2).sum())
        if sse < best[0]:
            best = (sse, labels, centers)
    return best[2], best[1], best[0]


def kmeans_cluster(
    collection: LutCollection, k: int, config: KMeansConfig = KMeansConfig()
) -> KMeansResult:
    """Deterministic k-means over flattened LUT entry vectors.

    Tiny instances (k**n small) are solved exactly by enumeration; otherwise
    squared Euclidean Lloyd iterations with k-means++ seeding, empty clusters
    re-seeded to the farthest point (ties broken by lowest index).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(collection):
        raise ValueError(f"k={k} exceeds collection size {len(collection)}")
    X = np.stack([l.flat().ravel() for l in collection.luts])  # (n, 3*S^3)
    size = collection.size
    if float(k) ** len(X) <= _EXACT_LIMIT:
        centers, labels, inertia = _kmeans_exact(X, k)
        center_luts = [Lut3D(c.reshape(size, size, size, 3)) for c in centers]
        return KMeansResult(center_luts, labels, inertia, 1, [inertia])
    rng = np.random.Generator(np.random.Philox(config.seed))
    centers = _plusplus_seed(X, k, rng)

    labels = np.zeros(len(X), dtype=np.int64)
    history: list[float] = []
    n_iters = 0
    for n_iters in range(1, config.max_iters + 1):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)  # argmin ties -> lowest index
        history.append(float(d2[np.arange(len(X)), labels].sum()))
        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = X[members].mean(axis=0)
            else:
                # farthest point from its assigned center, lowest index on ties
                dist_to_own = d2[np.arange(len(X)), labels]
                far = int(dist_to_own.argmax())
                new_centers[j] = X[far]
                labels[far] = j
        shift = np.abs(new_centers - centers).max()
        centers = new_centers
        if shift < config.tol:
            break
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(X)), labels].sum())
    center_luts = [Lut3D(c.reshape(size, size, size, 3)) for c in centers]
    return KMeansResult(center_luts, labels, inertia, n_iters, history)


def init_basis(
    collection: LutCollection, n_basis: int, config: KMeansConfig = KMeansConfig()
) -> BasisSet:
    """Basis of ``n_basis`` LUTs: the identity plus n_basis-1 cluster centers."""
    if n_basis < 2:
        raise ValueError(f"basis count must be >= 2, got {n_basis}")
    result = kmeans_cluster(collection, n_basis - 1, config)
    return BasisSet([identity_lut(collection.size)] + result.centers)
