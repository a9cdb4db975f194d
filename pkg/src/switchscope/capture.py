"""On-disk capture format: interleaved (ref, sw) complex64 little-endian plus a JSON sidecar."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParameterError, PlanViolation, StructureError
from .iqcore import ArrayGeometry, IQCapture
from .ssfp import SwitchPlan

FORMAT = "switchscope-capture"
VERSION = 1
SAMPLE_DTYPE = np.dtype("<c8")


def sidecar_path(data_path) -> Path:
    return Path(str(data_path) + ".meta.json")


def truth_path(data_path) -> Path:
    return Path(str(data_path) + ".truth.json")


def ports_path(data_path) -> Path:
    return Path(str(data_path) + ".ports.npy")


def write_capture(path, cap: IQCapture, seed: Optional[int] = None, block: int = 1 << 20) -> Path:
    """Write data file and sidecar; returns the data path."""
    path = Path(path)
    with open(path, "wb") as f:
        for a in range(0, len(cap), block):
            b = min(len(cap), a + block)
            frame = np.empty((b - a, 2), dtype=SAMPLE_DTYPE)
            frame[:, 0] = cap.ref_samples[a:b]
            frame[:, 1] = cap.sw_samples[a:b]
            f.write(frame.tobytes())
    meta = {
        "format": FORMAT, "version": VERSION,
        "sample_rate_hz": cap.sample_rate_hz, "center_freq_hz": cap.center_freq_hz,
        "refclk_hz": cap.refclk_hz, "trigger_sample": int(cap.trigger_sample),
        "n_samples": len(cap),
        "plan": cap.plan.to_dict() if cap.plan is not None else None,
        "array_geometry": cap.array_geometry.to_dict() if cap.array_geometry is not None else None,
        "seed": seed,
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_metadata(path) -> dict:
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise StructureError(f"{side}:{exc.lineno}: {exc.msg}") from exc
    if meta.get("format") != FORMAT:
        raise StructureError(f"{side}: not a {FORMAT} sidecar")
    return meta


def read_capture(path, mmap: bool = True) -> IQCapture:
    """Open a capture.  With ``mmap`` the samples stay on disk until touched."""
    path = Path(path)
    meta = read_metadata(path)
    size = path.stat().st_size
    if size % (2 * SAMPLE_DTYPE.itemsize):
        raise StructureError(f"{path}: {size} bytes is not a whole number of (ref, sw) sample pairs")
    n = size // (2 * SAMPLE_DTYPE.itemsize)
    if n == 0:
        raise StructureError(f"{path}: empty capture")
    if mmap:
        data = np.memmap(path, dtype=SAMPLE_DTYPE, mode="r", shape=(n, 2))
    else:
        data = np.fromfile(path, dtype=SAMPLE_DTYPE).reshape(n, 2)
    plan = None
    if meta.get("plan") is not None:
        try:
            plan = SwitchPlan.from_dict(meta["plan"])
        except (PlanViolation, ParameterError, KeyError, TypeError) as exc:
            raise PlanViolation(f"{sidecar_path(path)}: invalid switch plan: {exc}") from exc
        if plan.f_s_hz != meta["sample_rate_hz"]:
            raise PlanViolation("sidecar plan sample rate differs from sample_rate_hz")
    geom = ArrayGeometry.from_dict(meta["array_geometry"]) if meta.get("array_geometry") else None
    return IQCapture(data[:, 0], data[:, 1], float(meta["sample_rate_hz"]),
                     float(meta["center_freq_hz"]), float(meta["refclk_hz"]),
                     int(meta["trigger_sample"]), plan, geom)
