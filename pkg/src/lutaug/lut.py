"""3D colour look-up tables: trilinear lookup, masked application, combination
and .cube file I/O.

A LUT is a cubic lattice of ``size`` points per axis.  Entries are stored as a
``(size, size, size, 3)`` float64 array indexed ``[blue, green, red]`` so that
flattening in C order gives the .cube convention (red index varies fastest).
Entry values are nominally in [0, 1] but may leave that range; lookup inputs
are clamped to [0, 1] before indexing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CubeParseError

DEFAULT_SIZE = 17  # B=16 bins per axis


@dataclass(frozen=True)
class Lut3D:
    """A 3D LUT lattice. ``table[b, g, r]`` is the output RGB for lattice
    indices (r, g, b)."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 4 or t.shape[3] != 3 or len(set(t.shape[:3])) != 1:
            raise ValueError(f"LUT table must have shape (S, S, S, 3), got {t.shape}")
        if t.shape[0] < 2:
            raise ValueError("LUT size must be >= 2")
        if not np.all(np.isfinite(t)):
            raise ValueError("LUT entries must be finite")
        object.__setattr__(self, "table", t)

    @property
    def size(self) -> int:
        return self.table.shape[0]

    def entry(self, i: int, j: int, k: int) -> np.ndarray:
        """Output colour at lattice indices (i=red, j=green, k=blue)."""
        return self.table[k, j, i]

    def flat(self) -> np.ndarray:
        """Entries as an (S^3, 3) array, red index varying fastest."""
        return self.table.reshape(-1, 3)


def identity_lut(size: int = DEFAULT_SIZE) -> Lut3D:
    """The identity LUT: entry (i, j, k) maps to (i, j, k)/(size-1)."""
    if size < 2:
        raise ValueError(f"LUT size must be >= 2, got {size}")
    ramp = np.linspace(0.0, 1.0, size)
    b, g, r = np.meshgrid(ramp, ramp, ramp, indexing="ij")
    return Lut3D(np.stack([r, g, b], axis=-1))


def _cell_and_frac(size: int, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp colors to [0,1], scale to lattice units, split into the base cell
    index (clamped to size-2 so the +1 corner exists) and fractional offset."""
    scaled = np.clip(colors, 0.0, 1.0) * (size - 1)
    base = np.minimum(np.floor(scaled).astype(np.int64), size - 2)
    return base, scaled - base


# Corner offsets in (r, g, b) order; row order defines the weight order.
_CORNERS = np.array(
    [[dr, dg, db] for db in (0, 1) for dg in (0, 1) for dr in (0, 1)],
    dtype=np.int64,
)


def lookup_weights(lut_size: int, colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trilinear corner indices and weights for one or more colors.

    Returns ``(flat_indices, weights)`` of shape (..., 8) where flat indices
    address ``Lut3D.flat()`` rows ((b*S + g)*S + r).  Weights are >= 0 and sum
    to 1, and ``lookup(lut, c) == sum_i w_i * flat[idx_i]`` for any LUT of
    this size.
    """
    colors = np.asarray(colors, dtype=np.float64)
    base, frac = _cell_and_frac(lut_size, colors)
    corners = base[..., None, :] + _CORNERS  # (..., 8, 3) in (r, g, b)
    w = np.ones(colors.shape[:-1] + (8,), dtype=np.float64)
    for axis in range(3):
        f = frac[..., axis, None]
        w = w * np.where(_CORNERS[:, axis] == 1, f, 1.0 - f)
    flat = (corners[..., 2] * lut_size + corners[..., 1]) * lut_size + corners[..., 0]
    return flat, w


def lookup(lut: Lut3D, colors: np.ndarray) -> np.ndarray:
    """Trilinear lookup of one color (shape (3,)) or a batch (..., 3)."""
    colors = np.asarray(colors, dtype=np.float64)
    flat_idx, w = lookup_weights(lut.size, colors)
    return np.einsum("...c,...cd->...d", w, lut.flat()[flat_idx])


def apply_to_foreground(lut: Lut3D, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Apply the LUT to foreground pixels, leaving background pixels untouched.

    ``image`` is (H, W, 3); ``mask`` is (H, W) and truthy on the foreground.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got {image.shape}")
    if mask.shape != image.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match image {image.shape[:2]}"
        )
    out = image.copy()
    fg = mask.astype(bool)
    if fg.any():
        out[fg] = lookup(lut, image[fg])
    return out


def combine(basis: list[Lut3D], coeffs: np.ndarray) -> Lut3D:
    """Entrywise weighted sum of basis LUTs with simplex coefficients."""
    if not basis:
        raise ValueError("basis must be non-empty")
    size = basis[0].size
    if any(l.size != size for l in basis):
        raise ValueError("basis LUTs must share one size")
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (len(basis),):
        raise ValueError(
            f"need {len(basis)} coefficients, got shape {coeffs.shape}"
        )
    if np.any(coeffs < 0) or abs(coeffs.sum() - 1.0) > 1e-6:
        raise ValueError("coefficients must be >= 0 and sum to 1 (within 1e-6)")
    tables = np.stack([l.table for l in basis])
    return Lut3D(np.tensordot(coeffs, tables, axes=1))


def parse_cube(text: str) -> Lut3D:
    """Parse a .cube file (3D only). See serialize_cube for the format."""
    size = None
    rows: list[list[float]] = []
    data_line_nums: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        upper = line.upper()
        if upper.startswith("TITLE"):
            continue
        if upper.startswith("LUT_3D_SIZE"):
            parts = line.split()
            if len(parts) != 2:
                raise CubeParseError("malformed LUT_3D_SIZE line", lineno)
            try:
                size = int(parts[1])
            except ValueError:
                raise CubeParseError(f"non-integer LUT size {parts[1]!r}", lineno)
            if size < 2:
                raise CubeParseError(f"LUT size must be >= 2, got {size}", lineno)
            continue
        if upper.startswith("DOMAIN_MIN") or upper.startswith("DOMAIN_MAX"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CubeParseError(
                f"expected 3 values per data line, got {len(parts)}", lineno
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise CubeParseError(f"non-numeric token in data line: {line!r}", lineno)
        data_line_nums.append(lineno)
    if size is None:
        raise CubeParseError("missing LUT_3D_SIZE", 1)
    expected = size**3
    if len(rows) != expected:
        lineno = data_line_nums[-1] if data_line_nums else 1
        raise CubeParseError(
            f"expected {expected} data lines for size {size}, got {len(rows)}", lineno
        )
    table = np.asarray(rows, dtype=np.float64).reshape(size, size, size, 3)
    return Lut3D(table)


def serialize_cube(lut: Lut3D, title: str | None = None) -> str:
    """Serialize to .cube text: optional TITLE, LUT_3D_SIZE, DOMAIN lines, then
    S^3 data lines (red fastest) at 6 decimal places."""
    lines = []
    if title is not None:
        lines.append(f'TITLE "{title}"')
    lines.append(f"LUT_3D_SIZE {lut.size}")
    lines.append("DOMAIN_MIN 0.0 0.0 0.0")
    lines.append("DOMAIN_MAX 1.0 1.0 1.0")
    for rgb in lut.flat():
        lines.append(f"{rgb[0]:.6f} {rgb[1]:.6f} {rgb[2]:.6f}")
    return "\n".join(lines) + "\n"
