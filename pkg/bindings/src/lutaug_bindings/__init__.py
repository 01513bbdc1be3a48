"""Scripting bindings for frozen LUT-augmentation models.

Three operations, nothing else: ``open_augmentor`` loads a checkpoint into an
immutable handle, ``BoundAugmentor.augment`` samples synthetic composites from
the handle's private latent stream, and ``metrics`` delegates image scoring.
Training, clustering, and CLI workflows are deliberately not exposed.

Arrays cross the boundary as contiguous row-major float64 buffers; inputs are
validated and copied on entry, so callers never share storage with the
binding layer.
"""

from __future__ import annotations

import numpy as np

from lutaug.augmentor import Augmentor
from lutaug.checkpoint import VERSION as CHECKPOINT_VERSION
from lutaug.checkpoint import load_augmentor
from lutaug.errors import CheckpointError
from lutaug.metrics import fmse as _fmse
from lutaug.metrics import fssim as _fssim
from lutaug.metrics import mse as _mse

__version__ = "1.0.0"  # major pinned to the core checkpoint format version

__all__ = [
    "BoundAugmentor",
    "open_augmentor",
    "metrics",
    "CHECKPOINT_VERSION",
    "CheckpointError",
    "__version__",
]


def _as_image(arr, name: str) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 3 or out.shape[2] != 3:
        raise ValueError(f"{name} must be an (H, W, 3) array, got {np.shape(arr)}")
    return out.copy() if out is arr else out


def _as_mask(mask, shape: tuple[int, int]) -> np.ndarray:
    out = np.ascontiguousarray(mask)
    if out.ndim != 2:
        raise ValueError(f"mask must be an (H, W) array, got {np.shape(mask)}")
    if out.shape != shape:
        raise ValueError(f"mask shape {out.shape} != image shape {shape}")
    return out.astype(bool)


class BoundAugmentor:
    """Immutable handle to a frozen augmentation model plus a private,
    thread-confined latent stream. Do not construct directly; use
    :func:`open_augmentor`."""

    def __init__(self, model: Augmentor, seed: int | None):
        params = {k: v.copy() for k, v in model.params.items()}
        for v in params.values():
            v.flags.writeable = False
        self._model = Augmentor(model.config, params)
        self._rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(seed))
        )

    @property
    def config(self):
        return self._model.config

    def augment(self, real, mask, k: int) -> list[np.ndarray]:
        """k synthetic composites of ``real``'s foreground, advancing the
        handle's latent stream by k draws."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        real = _as_image(real, "real")
        fg = _as_mask(mask, real.shape[:2])
        return self._model.sample(real, fg, k, rng=self._rng)


def open_augmentor(checkpoint_path, seed: int | None = None) -> BoundAugmentor:
    """Load a frozen augmentation checkpoint into a ready handle.

    Raises :class:`CheckpointError` for missing, truncated, or
    version-incompatible files (the error names both versions)."""
    return BoundAugmentor(load_augmentor(checkpoint_path), seed)


def metrics(pred, target, mask) -> dict[str, float]:
    """MSE / foreground MSE / foreground SSIM (0-255 scale), delegated to the
    core implementations. Stateless and safe to call concurrently."""
    pred = _as_image(pred, "pred")
    target = _as_image(target, "target")
    fg = _as_mask(mask, pred.shape[:2])
    return {
        "mse": _mse(pred, target),
        "fmse": _fmse(pred, target, fg),
        "fssim": _fssim(pred, target, fg),
    }
