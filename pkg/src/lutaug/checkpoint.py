"""Flat binary checkpoint container: magic string, format version, a JSON
manifest of hyper-parameters, then named float64 little-endian blocks."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"LAUGCKPT"
VERSION = 1


def save_checkpoint(
    path: str | Path, params: dict[str, np.ndarray], manifest: dict
) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(mbytes)))
    chunks.append(mbytes)
    chunks.append(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        nbytes = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nbytes)))
        chunks.append(nbytes)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    r = _Reader(path.read_bytes(), str(path))
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic (not a checkpoint file)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version}, expected {VERSION}"
        )
    (mlen,) = r.unpack("<I")
    try:
        manifest = json.loads(r.take(mlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}")
    (nblocks,) = r.unpack("<I")
    params = {}
    for _ in range(nblocks):
        (namelen,) = r.unpack("<H")
        name = r.take(namelen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(count * 8), dtype="<f8").astype(np.float64)
        params[name] = data.reshape(shape)
    return params, manifest


def save_augmentor(path: str | Path, model) -> None:
    manifest = model.config.to_manifest()
    manifest["kind"] = "augmentor"
    save_checkpoint(path, model.params, manifest)


def load_augmentor(path: str | Path):
    from .augmentor import Augmentor, AugmentorConfig

    params, manifest = load_checkpoint(path)
    if manifest.get("kind") != "augmentor":
        raise CheckpointError(
            f"{path}: expected an augmentor checkpoint, got kind={manifest.get('kind')!r}"
        )
    return Augmentor(AugmentorConfig.from_manifest(manifest), params)


def save_harmonizer(path: str | Path, harmonizer) -> None:
    manifest = harmonizer.to_manifest()
    manifest["kind"] = "harmonizer"
    save_checkpoint(path, harmonizer.params, manifest)


def load_harmonizer(path: str | Path):
    from .harmonize import AffineHarmonizer

    params, manifest = load_checkpoint(path)
    if manifest.get("kind") != "harmonizer":
        raise CheckpointError(
            f"{path}: expected a harmonizer checkpoint, got kind={manifest.get('kind')!r}"
        )
    return AffineHarmonizer.from_manifest(manifest, params)
