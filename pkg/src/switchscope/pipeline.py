"""End-to-end streaming: detection on the reference channel, then per-box inversion and AoA."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .aoa import DEFAULT_GRID_STEP_DEG, DEFAULT_MIN_COHERENCE, estimate_box_aoa, wavelength_for
from .errors import ParameterError, PlanViolation, SwitchscopeError
from .iqcore import IQCapture, psd, stft_forward
from .searchlite import (DEFAULT_PAD_BINS, DEFAULT_PAD_FRAMES, BandContext, DetectionBox,
                         DetectorConfig, StreamingDetector, SubMatrix, excision_bounds)
from .ssfp import SwitchPlan, invert_box

DEFAULT_CHUNK_HOPS = 64


@dataclass
class PipelineConfig:
    detector: DetectorConfig = dataclasses.field(default_factory=DetectorConfig)
    grid_step_deg: float = DEFAULT_GRID_STEP_DEG
    min_coherence: float = DEFAULT_MIN_COHERENCE
    activity_ratio: float = 0.1
    chunk_hops: int = DEFAULT_CHUNK_HOPS
    pad_frames: int = DEFAULT_PAD_FRAMES
    pad_bins: int = DEFAULT_PAD_BINS
    antenna_subset: Optional[Sequence[int]] = None
    estimate_aoa: bool = True


@dataclass
class Annotation:
    box: DetectionBox
    aoa: Optional[object] = None        # aoa.BoxAoA
    nifft: Optional[int] = None
    error: Optional[str] = None

    def to_record(self) -> dict:
        rec = self.box.to_record()
        if self.aoa is not None:
            rec.update(self.aoa.to_record())
        else:
            rec.update({"angle_deg": [], "aoa_median_deg": None, "n_antennas_used": 0,
                        "reduced_aperture": False, "coherence": None, "f_c_hz": None})
        rec["nifft"] = self.nifft
        rec["error"] = self.error
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), allow_nan=False, default=float)


class FrameCache:
    """STFT frames of one channel, computed lazily one chunk at a time.

    Chunks start at multiples of ``chunk_hops`` frames, so a frame's value
    does not depend on which request computed it.
    """

    def __init__(self, compute, n_frames: int, chunk_hops: int):
        self._compute = compute
        self.n_frames = n_frames
        self.chunk = chunk_hops
        self._chunks: dict = {}

    def put(self, c: int, frames: np.ndarray) -> None:
        self._chunks[c] = frames

    def _get_chunk(self, c: int) -> np.ndarray:
        if c not in self._chunks:
            f0 = c * self.chunk
            self._chunks[c] = self._compute(f0, min(self.n_frames, f0 + self.chunk))
        return self._chunks[c]

    def frames(self, f0: int, f1: int, b0: int = 0, b1: Optional[int] = None) -> np.ndarray:
        """Bins ``b0 .. b1-1`` of frames ``f0 .. f1-1``."""
        parts = []
        for c in range(f0 // self.chunk, (f1 - 1) // self.chunk + 1):
            base = c * self.chunk
            parts.append(self._get_chunk(c)[max(f0, base) - base:min(f1, base + self.chunk) - base, b0:b1])
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def evict_before(self, frame: int) -> None:
        for c in [c for c in self._chunks if (c + 1) * self.chunk <= frame]:
            del self._chunks[c]


def stft_origin(cap: IQCapture, plan: SwitchPlan) -> int:
    """First STFT sample, placed so every switch boundary is on each decimated grid."""
    return cap.trigger_sample % plan.samples_per_switch_fullrate


class Pipeline:
    """Chunked processing of an :class:`IQCapture` (arrays may be memory-mapped)."""

    def __init__(self, cap: IQCapture, config: Optional[PipelineConfig] = None,
                 plan: Optional[SwitchPlan] = None):
        self.cap = cap
        self.cfg = config or PipelineConfig()
        self.plan = plan or cap.plan
        if self.plan is None:
            raise PlanViolation("capture has no switch plan")
        if self.plan.f_s_hz != cap.sample_rate_hz:
            raise PlanViolation(f"plan F_S={self.plan.f_s_hz} differs from capture {cap.sample_rate_hz}")
        if self.cfg.chunk_hops < 1:
            raise ParameterError("chunk_hops must be >= 1")
        self.geometry = cap.array_geometry
        if self.cfg.estimate_aoa and self.geometry is None:
            raise ParameterError("capture has no array geometry; AoA estimation impossible")
        if self.geometry is not None and self.geometry.n_antennas != self.plan.n_antennas:
            raise PlanViolation("array geometry and plan disagree on antenna count")
        self.nfft = self.plan.nfft
        self.hop = self.plan.hop
        self.origin = stft_origin(cap, self.plan)
        usable = len(cap) - self.origin
        self.n_frames = (usable - self.nfft) // self.hop + 1 if usable >= self.nfft else 0
        self.ctx = BandContext(self.nfft, cap.sample_rate_hz, cap.center_freq_hz, self.origin)
        self.detector = StreamingDetector(self.ctx, dataclasses.replace(self.cfg.detector))
        H = self.cfg.chunk_hops
        self._ref = FrameCache(lambda a, b: self._frames(a, b, cap.ref_samples), self.n_frames, H)
        self._sw = FrameCache(lambda a, b: self._frames(a, b, cap.sw_samples), self.n_frames, H)

    def _frames(self, f0: int, f1: int, channel) -> np.ndarray:
        a = self.origin + f0 * self.hop
        b = self.origin + (f1 + 1) * self.hop
        x = np.asarray(channel[a:b])
        return stft_forward(x, self.nfft, a).frames

    def boxes(self) -> Iterator[DetectionBox]:
        H = self.cfg.chunk_hops
        for f0 in range(0, self.n_frames, H):
            f1 = min(self.n_frames, f0 + H)
            frames = self._frames(f0, f1, self.cap.ref_samples)
            self._ref.put(f0 // H, frames)
            yield from self.detector.feed(psd(frames, self.nfft))
            keep = self.detector.earliest_needed_frame - self.cfg.pad_frames
            self._ref.evict_before(keep)
            self._sw.evict_before(keep)
        yield from self.detector.flush()

    def annotate(self, box: DetectionBox) -> Annotation:
        f0, f1, b0, b1 = excision_bounds(box, self.nfft, self.n_frames, self.cfg.pad_frames,
                                         self.cfg.pad_bins, self.plan)
        ann = Annotation(box, nifft=b1 - b0)
        if not self.cfg.estimate_aoa:
            return ann
        try:
            origin = self.origin + f0 * self.hop
            subs = [SubMatrix(cache.frames(f0, f1, b0, b1), 0, b0, self.nfft, origin)
                    for cache in (self._ref, self._sw)]
            inv = invert_box(subs, self.plan, self.cap.trigger_sample, self.cfg.activity_ratio)
            ann.aoa = estimate_box_aoa(inv, self.geometry, wavelength_for(box.center_freq_hz),
                                       self.cfg.grid_step_deg, self.cfg.min_coherence,
                                       self.cfg.antenna_subset)
            if not ann.aoa.estimates:
                ann.error = "no usable dwells for an AoA estimate"
        except (SwitchscopeError, ValueError) as exc:
            ann.error = f"{type(exc).__name__}: {exc}"
        return ann

    def run(self) -> Iterator[Annotation]:
        for box in self.boxes():
            yield self.annotate(box)


def run_pipeline(cap: IQCapture, config: Optional[PipelineConfig] = None,
                 plan: Optional[SwitchPlan] = None) -> list:
    return list(Pipeline(cap, config, plan).run())
