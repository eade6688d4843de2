"""8-bit PNG and float NPY export/import for rendered images."""
from __future__ import annotations

import numpy as np
from PIL import Image


def write_png(path, image: np.ndarray) -> None:
    """Linear floats in [0, 1] to 8-bit by rounding v * 255."""
    arr = np.asarray(image, dtype=np.float64)
    quantized = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """8-bit PNG back to floats in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_npy(path, image: np.ndarray) -> None:
    np.save(path, np.asarray(image, dtype=np.float32))


def read_npy(path) -> np.ndarray:
    return np.load(path).astype(np.float64)
