"""Dataset I/O: PNG images, binarized masks, JSON-lines manifests of
(composite, real, mask) triples, augmented-set materialization, and a
procedural toy dataset generator used for desk-scale experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyForegroundError, ManifestError
from .lut import Lut3D, apply_to_foreground

MASK_THRESHOLD = 128  # 8-bit grayscale >= 128 -> foreground


@dataclass(frozen=True)
class ManifestRecord:
    composite_path: str
    real_path: str
    mask_path: str
    domain: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    records: list[ManifestRecord]

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class TrainPair:
    composite: np.ndarray  # (H, W, 3) float in [0, 1]
    real: np.ndarray
    mask: np.ndarray  # (H, W) bool
    composite_path: str = ""
    real_path: str = ""
    mask_path: str = ""
    domain: str | None = None


def load_image(path: str | Path) -> np.ndarray:
    """8-bit RGB file -> float64 (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def load_mask(path: str | Path) -> np.ndarray:
    """8-bit grayscale file -> bool (H, W), thresholded at 128."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= MASK_THRESHOLD


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write a float image in [0, 1] as 8-bit PNG (round half away from zero)."""
    arr = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr).save(path)


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask.astype(bool), 255, 0).astype(np.uint8)).save(path)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a JSON-lines manifest; every record needs composite_path,
    real_path and mask_path, resolvable relative to the manifest."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records = []
    base = path.parent
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc}", lineno)
        for key in ("composite_path", "real_path", "mask_path"):
            if key not in obj:
                raise ManifestError(f"missing field {key!r}", lineno)
        paths = {}
        for key in ("composite_path", "real_path", "mask_path"):
            p = Path(obj[key])
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise ManifestError(f"unresolvable path for {key!r}: {p}", lineno)
            paths[key] = str(p)
        records.append(ManifestRecord(domain=obj.get("domain"), **paths))
    if not records:
        raise ManifestError(f"manifest is empty: {path}")
    return DatasetManifest(records)


def load_pair(record: ManifestRecord) -> TrainPair:
    composite = load_image(record.composite_path)
    real = load_image(record.real_path)
    mask = load_mask(record.mask_path)
    if composite.shape != real.shape or mask.shape != real.shape[:2]:
        raise ValueError(
            f"dimension mismatch: composite {composite.shape}, real {real.shape}, "
            f"mask {mask.shape} ({record.real_path})"
        )
    if not mask.any():
        raise EmptyForegroundError(f"all-background mask: {record.mask_path}")
    return TrainPair(
        composite,
        real,
        mask,
        composite_path=record.composite_path,
        real_path=record.real_path,
        mask_path=record.mask_path,
        domain=record.domain,
    )


def load_dataset(manifest: DatasetManifest) -> list[TrainPair]:
    return [load_pair(r) for r in manifest.records]


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    lines = []
    for r in manifest.records:
        obj = {
            "composite_path": r.composite_path,
            "real_path": r.real_path,
            "mask_path": r.mask_path,
        }
        if r.domain is not None:
            obj["domain"] = r.domain
        lines.append(json.dumps(obj, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def write_augmented_set(
    pairs: list[TrainPair], out_dir: str | Path
) -> DatasetManifest:
    """Materialize augmented pairs as PNG files plus a manifest.

    ``pair.composite`` holds the augmented image. Real images and masks are
    referenced in place when they already live on disk, otherwise written
    alongside the composites. Composite files are named {real_stem}_aug{k}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts: dict[str, int] = {}
    records = []
    for i, pair in enumerate(pairs):
        stem = Path(pair.real_path).stem if pair.real_path else f"pair{i:04d}"
        k = counts.get(stem, 0)
        counts[stem] = k + 1
        comp_path = out_dir / f"{stem}_aug{k}.png"
        save_image(comp_path, pair.composite)
        if pair.real_path:
            real_path, mask_path = pair.real_path, pair.mask_path
        else:
            real_path = str(out_dir / f"{stem}_real.png")
            mask_path = str(out_dir / f"{stem}_mask.png")
            if k == 0:
                save_image(real_path, pair.real)
                save_mask(mask_path, pair.mask)
        records.append(
            ManifestRecord(str(comp_path), real_path, mask_path, pair.domain)
        )
    manifest = DatasetManifest(records)
    write_manifest(out_dir / "manifest.jsonl", manifest)
    return manifest


# ---------------------------------------------------------------------------
# procedural toy dataset
# ---------------------------------------------------------------------------

def _toy_real_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth random field: per-channel linear gradient plus two Gaussian
    blobs, normalized into [0.1, 0.9]."""
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = np.empty((size, size, 3))
    for c in range(3):
        plane = rng.uniform(-1, 1) * x + rng.uniform(-1, 1) * y + rng.uniform(0, 1)
        for _ in range(2):
            cx, cy = rng.uniform(0, 1, size=2)
            sig = rng.uniform(0.15, 0.4)
            plane += rng.uniform(-1, 1) * np.exp(
                -((x - cx) ** 2 + (y - cy) ** 2) / (2 * sig**2)
            )
        lo, hi = plane.min(), plane.max()
        img[..., c] = 0.1 + 0.8 * (plane - lo) / max(hi - lo, 1e-9)
    return img


def _toy_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random axis-aligned rectangle covering roughly 15-40% of the image."""
    h = int(size * rng.uniform(0.4, 0.65))
    w = int(size * rng.uniform(0.4, 0.65))
    top = int(rng.integers(0, size - h + 1))
    left = int(rng.integers(0, size - w + 1))
    mask = np.zeros((size, size), dtype=bool)
    mask[top : top + h, left : left + w] = True
    return mask


def make_toy_dataset(
    n: int,
    size: int = 64,
    seed: int = 0,
    perturb: str = "affine",
    lut: Lut3D | None = None,
) -> list[TrainPair]:
    """Synthetic (composite, real, mask) triples.

    perturb="affine": per-pair random per-channel scale/offset on the
    foreground; perturb="lut": one fixed LUT (required argument) applied to
    every foreground.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if perturb not in ("affine", "lut"):
        raise ValueError(f"unknown perturbation {perturb!r}")
    if perturb == "lut" and lut is None:
        raise ValueError("perturb='lut' requires a LUT")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x70F])))
    pairs = []
    for i in range(n):
        real = _toy_real_image(rng, size)
        mask = _toy_mask(rng, size)
        if perturb == "affine":
            s = rng.uniform(0.6, 1.4, size=3)
            t = rng.uniform(-0.15, 0.15, size=3)
            composite = real.copy()
            composite[mask] = np.clip(real[mask] * s + t, 0.0, 1.0)
        else:
            composite = np.clip(apply_to_foreground(lut, real, mask), 0.0, 1.0)
        pairs.append(TrainPair(composite, real, mask, domain=f"toy{i:03d}"))
    return pairs


def write_toy_dataset(
    out_dir: str | Path,
    n: int,
    size: int = 64,
    seed: int = 0,
    perturb: str = "affine",
    lut: Lut3D | None = None,
) -> Path:
    """Write a toy dataset to disk and return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = make_toy_dataset(n, size, seed, perturb, lut)
    records = []
    for i, pair in enumerate(pairs):
        cp = out_dir / f"toy{i:03d}_composite.png"
        rp = out_dir / f"toy{i:03d}_real.png"
        mp = out_dir / f"toy{i:03d}_mask.png"
        save_image(cp, pair.composite)
        save_image(rp, pair.real)
        save_mask(mp, pair.mask)
        records.append(ManifestRecord(str(cp), str(rp), str(mp), pair.domain))
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest_path, DatasetManifest(records))
    return manifest_path
