"""Scikit-learn style estimator wrappers so the core algorithms compose with
standard ML pipelines (get_params/set_params, fit/transform/predict,
NotFittedError)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .augmentor import Augmentor, AugmentorConfig, train_augmentor
from .basis import KMeansConfig, LutCollection, kmeans_cluster
from .data import TrainPair
from .harmonize import AffineHarmonizer, AugTrainConfig, train_plain
from .lut import Lut3D


class LutKMeans(BaseEstimator):
    """Deterministic k-means (k-means++ seeding) over flattened LUT entry
    vectors, with the usual sklearn attributes."""

    def __init__(self, n_clusters=8, max_iter=100, tol=1e-8, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        side = round(np.cbrt(X.shape[1] / 3))
        if 3 * side**3 != X.shape[1] or side < 2:
            raise ValueError(
                f"feature dimension {X.shape[1]} is not 3*S^3 for an S >= 2"
            )
        luts = [Lut3D(row.reshape(side, side, side, 3)) for row in X]
        collection = LutCollection(luts, [f"row:{i}" for i in range(len(luts))])
        result = kmeans_cluster(
            collection,
            self.n_clusters,
            KMeansConfig(max_iters=self.max_iter, tol=self.tol, seed=self.random_state),
        )
        self.cluster_centers_ = np.stack([c.flat().ravel() for c in result.centers])
        self.labels_ = result.labels
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iters
        return self

    def predict(self, X):
        if not hasattr(self, "cluster_centers_"):
            raise NotFittedError("LutKMeans is not fitted")
        X = check_array(X, dtype=np.float64)
        d2 = ((X[:, None, :] - self.cluster_centers_[None]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class LutAugmentorEstimator(BaseEstimator, TransformerMixin):
    """Fit the augmentation network on (composite, real, mask) training pairs
    and transform real images into synthetic composites."""

    def __init__(self, d_z=32, n_basis=20, d_f=64, lut_size=17, encoder_size=64,
                 widths=(16, 32, 64, 64), lr=1e-4, batch_size=4, epochs=100,
                 random_state=0):
        self.d_z = d_z
        self.n_basis = n_basis
        self.d_f = d_f
        self.lut_size = lut_size
        self.encoder_size = encoder_size
        self.widths = widths
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _config(self) -> AugmentorConfig:
        return AugmentorConfig(
            d_z=self.d_z, n_basis=self.n_basis, d_f=self.d_f,
            lut_size=self.lut_size, encoder_size=self.encoder_size,
            widths=tuple(self.widths), lr=self.lr, batch_size=self.batch_size,
            epochs=self.epochs, seed=self.random_state,
        )

    def fit(self, X: list[TrainPair], y=None):
        if not X:
            raise ValueError("fit requires a non-empty list of training pairs")
        self.model_, self.history_ = train_augmentor(X, self._config())
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("LutAugmentorEstimator is not fitted")

    def transform(self, X: list[TrainPair], k: int = 1, seed: int | None = None):
        """k synthetic composites per pair; returns a list of lists."""
        self._check_fitted()
        base = self.random_state if seed is None else seed
        return [
            self.model_.sample(p.real, p.mask, k, seed=int(base) + i)
            for i, p in enumerate(X)
        ]

    def sample(self, real, mask, k: int, seed: int | None = None):
        self._check_fitted()
        return self.model_.sample(real, mask, k, seed=seed)


class AffineHarmonizerEstimator(BaseEstimator):
    """Toy harmonizer wrapped as an estimator: fit on training pairs, predict
    harmonized images from (composite, mask)."""

    def __init__(self, widths=(8, 16, 16, 16), encoder_size=64, epochs=50,
                 batch_size=4, lr=1e-3, random_state=0):
        self.widths = widths
        self.encoder_size = encoder_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.random_state = random_state

    def fit(self, X: list[TrainPair], y=None):
        if not X:
            raise ValueError("fit requires a non-empty list of training pairs")
        self.model_ = AffineHarmonizer(
            widths=tuple(self.widths), encoder_size=self.encoder_size,
            seed=self.random_state,
        )
        cfg = AugTrainConfig(
            mode="none", epochs=self.epochs, batch_size=self.batch_size,
            seed=self.random_state, lr=self.lr,
        )
        self.history_ = train_plain(self.model_, X, cfg)
        return self

    def predict(self, composite, mask):
        if not hasattr(self, "model_"):
            raise NotFittedError("AffineHarmonizerEstimator is not fitted")
        return self.model_.forward(composite, mask)
