"""Canonical pixel-space image object and lossless 8-bit IO.

All attacks perturb an (H, W, 3) float array with values in [0, 1]. Exported
artifacts live on the 8-bit grid k/255 so that the l-inf constraint can be
verified exactly in integer arithmetic.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

GRID = 255  # denominator of the 8-bit export grid


@dataclass
class Image:
    """An (H, W, 3) float64 pixel array in [0, 1] plus an opaque id."""

    pixels: np.ndarray
    id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got shape {px.shape}")
        if not np.isfinite(px).all():
            raise ValueError("pixels contain non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixels must lie in [0, 1]")
        self.pixels = px

    @property
    def shape(self):
        return self.pixels.shape


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Round [0,1] floats to the 8-bit grid (round half to even)."""
    return np.rint(np.asarray(pixels, dtype=np.float64) * GRID).astype(np.uint8)


def from_uint8(arr: np.ndarray, image_id: str = "") -> Image:
    return Image(np.asarray(arr, dtype=np.float64) / GRID, id=image_id)


def is_grid_aligned(pixels: np.ndarray, tol: float = 1e-9) -> bool:
    """True when every pixel equals some k/255 up to float noise."""
    scaled = np.asarray(pixels, dtype=np.float64) * GRID
    return bool(np.abs(scaled - np.rint(scaled)).max() <= tol)


def snap_to_grid(pixels: np.ndarray) -> np.ndarray:
    return to_uint8(pixels) / float(GRID)


def load_image(path, image_id: str | None = None) -> Image:
    """Load an 8-bit image file into the canonical [0,1] representation."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    if image_id is None:
        image_id = os.path.splitext(os.path.basename(str(path)))[0]
    return from_uint8(arr, image_id)


def save_png(image: Image, path) -> None:
    """Write the image as PNG; the export path is lossless.

    Requires grid-aligned pixels so that load(save(x)) == x bit-exactly.
    """
    if not is_grid_aligned(image.pixels):
        raise ValueError(
            "refusing lossy export: pixels are not on the 1/255 grid; "
            "quantize the attack result first"
        )
    data = encode_png_bytes(image)
    atomic_write_bytes(path, data)


def encode_png_bytes(image: Image) -> bytes:
    import io

    buf = io.BytesIO()
    PILImage.fromarray(to_uint8(image.pixels)).save(buf, format="PNG")
    return buf.getvalue()


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via temp file + rename so readers never observe partial files."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
