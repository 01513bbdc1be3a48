"""Latent-conditioned LUT augmentation network.

Two branches share a real-image encoder, an FC+softmax coefficient head and a
trainable bank of basis LUTs:

* generation: a random latent vector plus real-image features select a convex
  combination of basis LUTs, which is applied to the foreground to synthesize
  a composite image;
* reconstruction: a second encoder maps (composite, real, mask) to a latent
  Gaussian whose reparameterized sample must reproduce the original composite
  through the same head, trained with L1 reconstruction plus a KL penalty
  toward the standard normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from .basis import BasisSet, generate_seed_collection, init_basis, KMeansConfig
from .lut import Lut3D, lookup_weights
from .nn import ConvEncoder, LatentGaussian


@dataclass(frozen=True)
class AugmentorConfig:
    d_z: int = 32
    n_basis: int = 20
    d_f: int = 64
    lut_size: int = 17
    encoder_size: int = 64
    widths: tuple[int, ...] = (16, 32, 64, 64)
    lr: float = 1e-4
    batch_size: int = 4
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.d_z < 1:
            raise ValueError("d_z must be >= 1")
        if self.n_basis < 2:
            raise ValueError("n_basis must be >= 2")
        if self.widths[-1] != self.d_f:
            raise ValueError(
                f"last encoder width {self.widths[-1]} must equal d_f={self.d_f}"
            )
        object.__setattr__(self, "widths", tuple(self.widths))

    def to_manifest(self) -> dict:
        m = asdict(self)
        m["widths"] = list(self.widths)
        return m

    @classmethod
    def from_manifest(cls, manifest: dict) -> "AugmentorConfig":
        fields_ = {k: manifest[k] for k in cls.__dataclass_fields__ if k in manifest}
        if "widths" in fields_:
            fields_["widths"] = tuple(fields_["widths"])
        return cls(**fields_)


@dataclass(frozen=True)
class GenerateResult:
    composite: np.ndarray
    coeffs: np.ndarray
    lut: Lut3D


@dataclass(frozen=True)
class ReconstructResult:
    recon: np.ndarray
    latent: LatentGaussian
    coeffs: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class LossTerms:
    total: float
    rec: float
    kl: float


class Augmentor:
    """Model = config + flat parameter dict (see ``create`` for the layout)."""

    def __init__(self, config: AugmentorConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self.enc_real = ConvEncoder(4, config.widths)
        self.enc_lat = ConvEncoder(7, config.widths)

    @classmethod
    def create(
        cls,
        config: AugmentorConfig,
        basis: BasisSet | None = None,
        collection_size: int = 100,
        collection_seed: int | None = None,
    ) -> "Augmentor":
        """Fresh model; basis defaults to identity + k-means centers of the
        seeded procedural LUT collection."""
        if basis is None:
            cseed = config.seed if collection_seed is None else collection_seed
            collection = generate_seed_collection(
                collection_size, config.lut_size, cseed
            )
            basis = init_basis(collection, config.n_basis, KMeansConfig(seed=cseed))
        if len(basis) != config.n_basis or basis.size != config.lut_size:
            raise ValueError(
                f"basis ({len(basis)} LUTs, size {basis.size}) does not match "
                f"config (n_basis={config.n_basis}, lut_size={config.lut_size})"
            )
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
        enc_real = ConvEncoder(4, config.widths)
        enc_lat = ConvEncoder(7, config.widths)
        params: dict[str, np.ndarray] = {}
        params.update(nn.prefixed("enc_real.", enc_real.init_params(rng)))
        params.update(nn.prefixed("enc_lat.", enc_lat.init_params(rng)))
        d_f, d_z, L = config.d_f, config.d_z, config.n_basis
        params["enc_lat.mu_w"] = nn.uniform_init(rng, (d_z, d_f), d_f, d_z)
        params["enc_lat.mu_b"] = np.zeros(d_z)
        params["enc_lat.logvar_w"] = nn.uniform_init(rng, (d_z, d_f), d_f, d_z)
        params["enc_lat.logvar_b"] = np.zeros(d_z)
        params["head.w"] = nn.uniform_init(rng, (L, d_f + d_z), d_f + d_z, L)
        params["head.b"] = np.zeros(L)
        params["basis"] = np.stack([l.table for l in basis.luts])
        return cls(config, params)

    # -- forward pieces ------------------------------------------------------

    def basis_luts(self) -> list[Lut3D]:
        return [Lut3D(t) for t in self.params["basis"]]

    def _encoder_input(self, *planes: np.ndarray) -> np.ndarray:
        s = self.config.encoder_size
        resized = []
        for p in planes:
            p = np.asarray(p, dtype=np.float64)
            if p.ndim == 2:
                p = p[..., None]
            resized.append(nn.resize_bilinear(p, s, s))
        return nn.stack_channels(resized[0], *resized[1:])

    def _features_real(self, real, mask):
        x = self._encoder_input(real, mask)
        return self.enc_real.forward(nn.subdict("enc_real.", self.params), x)

    def _coeffs(self, f_r: np.ndarray, z: np.ndarray) -> np.ndarray:
        return nn.fc_softmax_head(
            self.params["head.w"], self.params["head.b"], f_r, z
        )

    def _apply_combined(
        self, table_flat: np.ndarray, real: np.ndarray, fg: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Apply a combined LUT (flattened (S^3, 3)) to the foreground of
        ``real`` and clamp to [0, 1]. Returns (composite, flat corner indices,
        weights, clamp pass-through mask) for backprop."""
        idx, wts = lookup_weights(self.config.lut_size, real[fg])
        vals = np.einsum("nc,ncd->nd", wts, table_flat[idx])
        clamp_mask = (vals > 0.0) & (vals < 1.0)
        out = real.copy()
        out[fg] = np.clip(vals, 0.0, 1.0)
        return out, idx, wts, clamp_mask

    def generate(
        self, real: np.ndarray, mask: np.ndarray, z: np.ndarray
    ) -> GenerateResult:
        """Synthesize a composite from a latent vector (generation branch)."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.config.d_z,):
            raise ValueError(f"z must have length {self.config.d_z}, got {z.shape}")
        real = np.asarray(real, dtype=np.float64)
        fg = np.asarray(mask).astype(bool)
        f_r, _ = self._features_real(real, mask)
        alpha = self._coeffs(f_r, z)
        s = self.config.lut_size
        table_flat = np.tensordot(alpha, self.params["basis"].reshape(len(alpha), -1, 3), axes=1)
        composite, _, _, _ = self._apply_combined(table_flat, real, fg)
        return GenerateResult(composite, alpha, Lut3D(table_flat.reshape(s, s, s, 3)))

    def reconstruct(
        self,
        real: np.ndarray,
        composite: np.ndarray,
        mask: np.ndarray,
        eps: np.ndarray,
    ) -> ReconstructResult:
        out = self._reconstruct_full(real, composite, mask, eps)
        return ReconstructResult(out["recon"], out["latent"], out["alpha"], out["z"])

    def _reconstruct_full(self, real, composite, mask, eps) -> dict:
        cfg = self.config
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != (cfg.d_z,):
            raise ValueError(f"eps must have length {cfg.d_z}, got {eps.shape}")
        real = np.asarray(real, dtype=np.float64)
        composite = np.asarray(composite, dtype=np.float64)
        if real.shape != composite.shape:
            raise ValueError("real and composite images must share a shape")
        fg = np.asarray(mask).astype(bool)

        f_r, cache_r = self._features_real(real, mask)
        x_z = self._encoder_input(composite, real, mask)
        f_z, cache_z = self.enc_lat.forward(nn.subdict("enc_lat.", self.params), x_z)
        mu = nn.linear(self.params["enc_lat.mu_w"], self.params["enc_lat.mu_b"], f_z)
        lv_pre = nn.linear(
            self.params["enc_lat.logvar_w"], self.params["enc_lat.logvar_b"], f_z
        )
        lv = np.clip(lv_pre, -nn.LOG_VAR_CLAMP, nn.LOG_VAR_CLAMP)
        latent = LatentGaussian(mu, lv)
        z = nn.reparameterize(latent, eps)
        alpha = self._coeffs(f_r, z)
        basis_flat = self.params["basis"].reshape(cfg.n_basis, -1, 3)
        table_flat = np.tensordot(alpha, basis_flat, axes=1)
        recon, idx, wts, clamp_mask = self._apply_combined(table_flat, real, fg)
        return {
            "recon": recon,
            "latent": latent,
            "alpha": alpha,
            "z": z,
            "f_r": f_r,
            "cache_r": cache_r,
            "f_z": f_z,
            "cache_z": cache_z,
            "lv_pre": lv_pre,
            "eps": eps,
            "fg": fg,
            "idx": idx,
            "wts": wts,
            "clamp_mask": clamp_mask,
            "basis_flat": basis_flat,
        }

    # -- loss and gradients --------------------------------------------------

    def loss_terms(
        self, result: ReconstructResult, composite: np.ndarray
    ) -> LossTerms:
        rec = nn.l1_loss(result.recon, composite)
        kl = nn.kl_to_standard_normal(result.latent)
        return LossTerms(total=kl + rec, rec=rec, kl=kl)

    def loss_and_grads(
        self, pairs: list, eps_batch: np.ndarray
    ) -> tuple[LossTerms, dict[str, np.ndarray]]:
        """Mean reconstruction+KL loss over a batch and its gradients w.r.t.
        every parameter block. ``pairs`` holds objects with .real, .composite,
        .mask; ``eps_batch`` is (len(pairs), d_z)."""
        if not pairs:
            raise ValueError("batch must be non-empty")
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        tot = rec = kl = 0.0
        for pair, eps in zip(pairs, eps_batch):
            out = self._reconstruct_full(pair.real, pair.composite, pair.mask, eps)
            terms, sample_grads = self._sample_backward(out, pair.composite)
            tot += terms.total
            rec += terms.rec
            kl += terms.kl
            for k in grads:
                grads[k] += sample_grads[k] / len(pairs)
        n = len(pairs)
        return LossTerms(tot / n, rec / n, kl / n), grads

    def _sample_backward(self, out: dict, composite: np.ndarray):
        cfg = self.config
        recon, alpha = out["recon"], out["alpha"]
        latent: LatentGaussian = out["latent"]
        terms = LossTerms(
            rec=nn.l1_loss(recon, composite),
            kl=nn.kl_to_standard_normal(latent),
            total=0.0,
        )
        terms = LossTerms(terms.rec + terms.kl, terms.rec, terms.kl)

        grads: dict[str, np.ndarray] = {}
        # L1 through the clamp into the combined table
        drecon = nn.l1_grad(recon, np.asarray(composite, dtype=np.float64))
        dvals = drecon[out["fg"]] * out["clamp_mask"]
        n_entries = cfg.lut_size**3
        d_table = np.zeros((n_entries, 3))
        contrib = out["wts"][..., None] * dvals[:, None, :]  # (n, 8, 3)
        np.add.at(d_table, out["idx"].ravel(), contrib.reshape(-1, 3))
        basis_flat = out["basis_flat"]
        grads["basis"] = (alpha[:, None, None] * d_table[None]).reshape(
            self.params["basis"].shape
        )
        dalpha = basis_flat.reshape(cfg.n_basis, -1) @ d_table.ravel()

        # softmax head (shared between branches)
        dlogits = nn.softmax_vjp(alpha, dalpha)
        x_head = np.concatenate([out["f_r"], out["z"]])
        dw, db, dx_head = nn.linear_backward(self.params["head.w"], x_head, dlogits)
        grads["head.w"] = dw
        grads["head.b"] = db
        df_r = dx_head[: cfg.d_f]
        dz = dx_head[cfg.d_f :]

        # latent heads: reparameterization + KL
        kl_dmu, kl_dlv = nn.kl_grads(latent)
        dmu = dz + kl_dmu
        dlv = dz * out["eps"] * 0.5 * np.exp(latent.log_var / 2.0) + kl_dlv
        dlv = dlv * (np.abs(out["lv_pre"]) < nn.LOG_VAR_CLAMP)
        for name, grad_head in (("mu", dmu), ("logvar", dlv)):
            w = self.params[f"enc_lat.{name}_w"]
            gw, gb, gf = nn.linear_backward(w, out["f_z"], grad_head)
            grads[f"enc_lat.{name}_w"] = gw
            grads[f"enc_lat.{name}_b"] = gb
            if "df_z" in grads:
                grads["df_z"] = grads["df_z"] + gf
            else:
                grads["df_z"] = gf
        df_z = grads.pop("df_z")

        enc_lat_grads, _ = self.enc_lat.backward(
            nn.subdict("enc_lat.", self.params), out["cache_z"], df_z
        )
        for k, v in enc_lat_grads.items():
            grads[f"enc_lat.{k}"] = v
        enc_real_grads, _ = self.enc_real.backward(
            nn.subdict("enc_real.", self.params), out["cache_r"], df_r
        )
        for k, v in enc_real_grads.items():
            grads[f"enc_real.{k}"] = v
        return terms, grads

    # -- sampling -------------------------------------------------------------

    def sample(
        self,
        real: np.ndarray,
        mask: np.ndarray,
        k: int,
        seed: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> list[np.ndarray]:
        """K composites from K independent standard-normal latents drawn from
        a counter-based (Philox) stream."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if rng is None:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        zs = rng.standard_normal((k, self.config.d_z))
        return [self.generate(real, mask, z).composite for z in zs]


def train_augmentor(
    pairs: list,
    config: AugmentorConfig,
    basis: BasisSet | None = None,
    init_from: Augmentor | None = None,
    collection_size: int = 100,
    collection_seed: int | None = None,
) -> tuple[Augmentor, list[dict]]:
    """Train (or finetune, via ``init_from``) the augmentation network with
    Adam over all parameter blocks. Returns the model and a per-epoch history
    of mean loss terms."""
    if not pairs:
        raise ValueError("training set must be non-empty")
    if init_from is not None:
        model = Augmentor(config, {k: v.copy() for k, v in init_from.params.items()})
    else:
        model = Augmentor.create(config, basis, collection_size, collection_seed)
    adam = nn.Adam(model.params, lr=config.lr)
    ss = np.random.SeedSequence([config.seed, 0xA46])
    rng = np.random.Generator(np.random.Philox(ss))
    n = len(pairs)
    history = []
    for epoch in range(1, config.epochs + 1):
        eps_all = rng.standard_normal((n, config.d_z))
        order = rng.permutation(n)
        tot = rec = kl = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            batch = [pairs[i] for i in batch_idx]
            terms, grads = model.loss_and_grads(batch, eps_all[batch_idx])
            model.params = adam.step(model.params, grads)
            tot += terms.total * len(batch)
            rec += terms.rec * len(batch)
            kl += terms.kl * len(batch)
        history.append(
            {"epoch": epoch, "total": tot / n, "rec": rec / n, "kl": kl / n}
        )
    return model, history
