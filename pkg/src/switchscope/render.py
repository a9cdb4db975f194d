"""Spectrogram image with detection box overlays, written as binary PGM."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import ParameterError


def spectrogram_image(psd_frames: np.ndarray, db_floor: float, db_ceil: float) -> np.ndarray:
    """uint8 image: rows are bins with the highest frequency on top, columns are frames."""
    if not db_floor < db_ceil:
        raise ParameterError(f"db_floor ({db_floor}) must be below db_ceil ({db_ceil})")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(np.asarray(psd_frames, dtype=np.float64))
    scaled = (np.clip(db, db_floor, db_ceil) - db_floor) * (255.0 / (db_ceil - db_floor))
    return np.ascontiguousarray(np.round(scaled).astype(np.uint8).T[::-1])


def draw_boxes(img: np.ndarray, boxes: Iterable, value: int = 255) -> np.ndarray:
    """1-pixel rectangle outlines around each box's frames and bins."""
    nbins = img.shape[0]
    for b in boxes:
        x0, x1 = b.frame_start, min(img.shape[1], b.frame_end) - 1
        y0, y1 = nbins - b.bin_end, nbins - 1 - b.bin_start
        if x1 < x0:
            continue
        img[y0, x0:x1 + 1] = value
        img[y1, x0:x1 + 1] = value
        img[y0:y1 + 1, x0] = value
        img[y0:y1 + 1, x1] = value
    return img


def write_pgm(path, img: np.ndarray) -> Path:
    path = Path(path)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ParameterError("PGM export needs a 2-D uint8 image")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1                              # single whitespace before the raster
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ParameterError("only 8-bit binary PGM is supported")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)


def render(psd_frames: np.ndarray, out_path, db_floor: float, db_ceil: float,
           boxes: Optional[Iterable] = None) -> Path:
    img = spectrogram_image(psd_frames, db_floor, db_ceil)
    if boxes:
        draw_boxes(img, boxes)
    return write_pgm(out_path, img)
