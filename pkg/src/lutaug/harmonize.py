"""Pluggable harmonization models and the augmentation training harness.

A harmonizer maps (composite, mask) to a harmonized image. Training can run
plain ("none"), with a freshly sampled synthetic composite per pair per epoch
("dynamic"), on a pre-materialized merged set ("static"), or on synthetic
composites only ("aug-only"). The augmentation network is always frozen here.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .augmentor import Augmentor
from .data import TrainPair
from .metrics import fmse
from .nn import ConvEncoder

MODES = ("none", "dynamic", "static", "aug-only")


class Harmonizer(ABC):
    """Contract: forward output has the input shape and the background is
    preserved within 1/255 per channel."""

    params: dict[str, np.ndarray]

    @abstractmethod
    def forward(self, composite: np.ndarray, mask: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def loss_and_grads(
        self, composite: np.ndarray, mask: np.ndarray, real: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        ...


class AffineHarmonizer(Harmonizer):
    """Toy reference harmonizer: a small CNN encoder predicts one per-channel
    affine correction (scale, offset) applied to the foreground pixels.

    The head is zero-initialized, so a fresh model predicts scale 1 / offset 0
    and acts as the identity.
    """

    def __init__(
        self,
        widths: tuple[int, ...] = (8, 16, 16, 16),
        encoder_size: int = 64,
        seed: int = 0,
        params: dict[str, np.ndarray] | None = None,
    ):
        self.widths = tuple(widths)
        self.encoder_size = encoder_size
        self.seed = seed
        self.encoder = ConvEncoder(4, self.widths)
        if params is None:
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence([seed, 0x4A12]))
            )
            params = nn.prefixed("enc.", self.encoder.init_params(rng))
            d_f = self.encoder.feature_dim
            params["head.w"] = np.zeros((6, d_f))
            params["head.b"] = np.zeros(6)
        self.params = params

    def to_manifest(self) -> dict:
        return {
            "widths": list(self.widths),
            "encoder_size": self.encoder_size,
            "seed": self.seed,
        }

    @classmethod
    def from_manifest(cls, manifest: dict, params: dict[str, np.ndarray]):
        return cls(
            widths=tuple(manifest["widths"]),
            encoder_size=manifest["encoder_size"],
            seed=manifest.get("seed", 0),
            params=params,
        )

    def _forward_full(self, composite: np.ndarray, mask: np.ndarray) -> dict:
        composite = np.asarray(composite, dtype=np.float64)
        if composite.ndim != 3 or composite.shape[2] != 3:
            raise ValueError(f"composite must be (H, W, 3), got {composite.shape}")
        fg = np.asarray(mask).astype(bool)
        if fg.shape != composite.shape[:2]:
            raise ValueError(
                f"mask shape {fg.shape} != image {composite.shape[:2]}"
            )
        s = self.encoder_size
        x = nn.stack_channels(
            nn.resize_bilinear(composite, s, s),
            nn.resize_bilinear(fg.astype(np.float64)[..., None], s, s)[..., 0],
        )
        feat, cache = self.encoder.forward(nn.subdict("enc.", self.params), x)
        h = nn.linear(self.params["head.w"], self.params["head.b"], feat)
        scale = 1.0 + h[:3]
        offset = h[3:]
        out = composite.copy()
        vals = composite[fg] * scale + offset
        clamp_mask = (vals > 0.0) & (vals < 1.0)
        out[fg] = np.clip(vals, 0.0, 1.0)
        return {
            "out": out,
            "fg": fg,
            "feat": feat,
            "cache": cache,
            "scale": scale,
            "clamp_mask": clamp_mask,
            "composite": composite,
        }

    def forward(self, composite: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return self._forward_full(composite, mask)["out"]

    def loss_and_grads(self, composite, mask, real):
        """Foreground mean squared error and gradients for all blocks."""
        real = np.asarray(real, dtype=np.float64)
        f = self._forward_full(composite, mask)
        fg = f["fg"]
        if not fg.any():
            raise ValueError("harmonizer training requires a non-empty foreground")
        diff = f["out"][fg] - real[fg]
        loss = float((diff**2).mean())
        dvals = (2.0 * diff / diff.size) * f["clamp_mask"]
        px = f["composite"][fg]
        dh = np.concatenate([(dvals * px).sum(axis=0), dvals.sum(axis=0)])
        grads: dict[str, np.ndarray] = {}
        gw, gb, dfeat = nn.linear_backward(self.params["head.w"], f["feat"], dh)
        grads["head.w"] = gw
        grads["head.b"] = gb
        enc_grads, _ = self.encoder.backward(
            nn.subdict("enc.", self.params), f["cache"], dfeat
        )
        for k, v in enc_grads.items():
            grads[f"enc.{k}"] = v
        return loss, grads


@dataclass(frozen=True)
class AugTrainConfig:
    mode: str = "dynamic"
    static_a: int | None = None
    epochs: int = 50
    batch_size: int = 4
    seed: int = 0
    lr: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "static" and (self.static_a is None or self.static_a < 1):
            raise ValueError("static mode requires multiplier a >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def _latent_stream(config: AugTrainConfig) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([config.seed, 0x5A9]))
    )


def _train_engine(
    harmonizer: Harmonizer,
    pairs: list[TrainPair],
    config: AugTrainConfig,
    augmentor: Augmentor | None,
    use_orig: bool,
    use_aug: bool,
) -> list[dict]:
    if not pairs:
        raise ValueError("training set must be non-empty")
    if use_aug and augmentor is None:
        raise ValueError("augmented training requires an augmentation model")
    adam = nn.Adam(harmonizer.params, lr=config.lr)
    shuffle_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([config.seed, 0x31F]))
    )
    z_rng = _latent_stream(config)
    n = len(pairs)
    history = []
    for epoch in range(1, config.epochs + 1):
        synthetic: list[np.ndarray | None] = [None] * n
        if use_aug:
            zs = z_rng.standard_normal((n, augmentor.config.d_z))
            synthetic = [
                augmentor.generate(p.real, p.mask, z).composite
                for p, z in zip(pairs, zs)
            ]
        order = shuffle_rng.permutation(n)
        orig_sum = aug_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            grads = {k: np.zeros_like(v) for k, v in harmonizer.params.items()}
            for i in batch:
                p = pairs[i]
                if use_orig:
                    loss, g = harmonizer.loss_and_grads(p.composite, p.mask, p.real)
                    orig_sum += loss
                    nn.accumulate(grads, {k: v / len(batch) for k, v in g.items()})
                if use_aug:
                    loss, g = harmonizer.loss_and_grads(synthetic[i], p.mask, p.real)
                    aug_sum += loss
                    nn.accumulate(grads, {k: v / len(batch) for k, v in g.items()})
            harmonizer.params = adam.step(harmonizer.params, grads)
        history.append(
            {
                "epoch": epoch,
                "orig": orig_sum / n if use_orig else 0.0,
                "aug": aug_sum / n if use_aug else 0.0,
                "total": (orig_sum + aug_sum) / n,
            }
        )
    return history


def train_plain(
    harmonizer: Harmonizer, pairs: list[TrainPair], config: AugTrainConfig
) -> list[dict]:
    """No augmentation: standard training on the original pairs."""
    return _train_engine(harmonizer, pairs, config, None, use_orig=True, use_aug=False)


def train_dynamic(
    harmonizer: Harmonizer,
    augmentor: Augmentor,
    pairs: list[TrainPair],
    config: AugTrainConfig,
) -> list[dict]:
    """One freshly sampled synthetic composite per pair per epoch; both the
    original and the synthetic loss terms update the harmonizer only."""
    return _train_engine(
        harmonizer, pairs, config, augmentor, use_orig=True, use_aug=True
    )


def train_augmented_only(
    harmonizer: Harmonizer,
    augmentor: Augmentor,
    pairs: list[TrainPair],
    config: AugTrainConfig,
) -> list[dict]:
    """Synthetic composites only; the original composites are discarded."""
    return _train_engine(
        harmonizer, pairs, config, augmentor, use_orig=False, use_aug=True
    )


def materialize_static_set(
    augmentor: Augmentor, pairs: list[TrainPair], a: int, config: AugTrainConfig
) -> list[TrainPair]:
    """Exactly a*N augmented pairs, drawn from the same latent stream that
    dynamic training would use (a=1 reproduces the first epoch's samples)."""
    if a < 1:
        raise ValueError("static multiplier a must be >= 1")
    z_rng = _latent_stream(config)
    out = []
    for rep in range(a):
        zs = z_rng.standard_normal((len(pairs), augmentor.config.d_z))
        for p, z in zip(pairs, zs):
            comp = augmentor.generate(p.real, p.mask, z).composite
            out.append(
                TrainPair(
                    comp,
                    p.real,
                    p.mask,
                    real_path=p.real_path,
                    mask_path=p.mask_path,
                    domain=p.domain,
                )
            )
    return out


def train_static(
    harmonizer: Harmonizer,
    augmentor: Augmentor,
    pairs: list[TrainPair],
    config: AugTrainConfig,
) -> tuple[list[TrainPair], list[dict]]:
    """Materialize a*N augmented pairs once, merge with the N originals, then
    train plainly on the merged set. Returns (augmented pairs, history)."""
    augmented = materialize_static_set(augmentor, pairs, config.static_a, config)
    merged = list(pairs) + augmented
    history = _train_engine(
        harmonizer, merged, config, None, use_orig=True, use_aug=False
    )
    return augmented, history


def harmonize_image(
    harmonizer: Harmonizer, composite: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Inference: a pure forward pass of the harmonization model."""
    return harmonizer.forward(composite, mask)


def held_out_fmse(harmonizer: Harmonizer, pairs: list[TrainPair]) -> float:
    """Mean foreground MSE of harmonized composites against the real images."""
    return float(
        np.mean(
            [fmse(harmonizer.forward(p.composite, p.mask), p.real, p.mask) for p in pairs]
        )
    )


def sweep_static_a(
    make_harmonizer,
    augmentor: Augmentor,
    pairs: list[TrainPair],
    config: AugTrainConfig,
    a_values: list[int],
    eval_pairs: list[TrainPair],
) -> list[dict]:
    """Train one static run per multiplier and report held-out fMSE per a."""
    rows = []
    for a in a_values:
        h = make_harmonizer()
        cfg = replace(config, mode="static", static_a=a)
        augmented, _ = train_static(h, augmentor, pairs, cfg)
        rows.append(
            {"a": a, "n_augmented": len(augmented), "fmse": held_out_fmse(h, eval_pairs)}
        )
    return rows
