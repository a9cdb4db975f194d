"""Sample containers and the invertible half-overlap Hann STFT.

Frames are stored FFT-shifted (bin 0 is -F_S/2, DC sits at nfft // 2) and
unnormalized; :func:`psd` applies the power normalization.  Reconstruction is
plain overlap-add: the periodic Hann window sums to exactly 1 at hop = nfft/2,
so dividing by the overlap-sum constant is the only synthesis step.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np
import scipy.fft

from .errors import EmptySpectrogramError, ParameterError, StructureError

if TYPE_CHECKING:
    from .ssfp import SwitchPlan

MIN_NFFT = 4


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna coordinates (meters) along the array axis."""

    positions_m: tuple[float, ...]
    reference_position_m: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "positions_m", tuple(float(x) for x in self.positions_m))
        if len(self.positions_m) < 1:
            raise ParameterError("array needs at least one switched antenna")

    @classmethod
    def uniform(cls, n_antennas: int, spacing_m: float, reference_position_m: float = 0.0):
        return cls(tuple(i * spacing_m for i in range(n_antennas)), reference_position_m)

    @property
    def n_antennas(self) -> int:
        return len(self.positions_m)

    def to_dict(self) -> dict:
        return {"positions_m": list(self.positions_m),
                "reference_position_m": self.reference_position_m}

    @classmethod
    def from_dict(cls, d: dict) -> "ArrayGeometry":
        return cls(tuple(d["positions_m"]), float(d.get("reference_position_m", 0.0)))


@dataclass
class IQCapture:
    """Two synchronized complex streams: reference antenna and switched array port."""

    ref_samples: np.ndarray
    sw_samples: np.ndarray
    sample_rate_hz: float
    center_freq_hz: float
    refclk_hz: float
    trigger_sample: int
    plan: Optional["SwitchPlan"] = None
    array_geometry: Optional[ArrayGeometry] = None

    def __post_init__(self):
        self.ref_samples = np.asarray(self.ref_samples)
        self.sw_samples = np.asarray(self.sw_samples)
        if self.ref_samples.shape != self.sw_samples.shape or self.ref_samples.ndim != 1:
            raise StructureError(
                f"reference and switched streams differ: {self.ref_samples.shape} vs {self.sw_samples.shape}")
        if self.trigger_sample < 0:
            raise ParameterError("trigger_sample must be >= 0")
        if self.sample_rate_hz <= 0:
            raise ParameterError("sample_rate_hz must be positive")

    def __len__(self):
        return len(self.ref_samples)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class Window:
    coefficients: np.ndarray
    kind: str = "hann"

    @property
    def nfft(self) -> int:
        return len(self.coefficients)

    @property
    def hop(self) -> int:
        return self.nfft // 2

    @property
    def cola_constant(self) -> float:
        w = self.coefficients
        return float(w[0] + w[self.hop])

    @property
    def power(self) -> float:
        """Sum of squared coefficients; white noise of variance s2 gives s2 * power per bin."""
        return float(np.sum(self.coefficients ** 2))


@functools.lru_cache(maxsize=32)
def make_window(nfft: int) -> Window:
    """Periodic Hann window of length ``nfft``.

    >>> make_window(4).coefficients
    array([0. , 0.5, 1. , 0.5])
    """
    if int(nfft) != nfft or nfft < MIN_NFFT or nfft % 2:
        raise ParameterError(f"nfft must be an even integer >= {MIN_NFFT}, got {nfft}")
    nfft = int(nfft)
    n = np.arange(nfft)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / nfft)
    w.setflags(write=False)
    return Window(w)


@dataclass(frozen=True)
class Spectrogram:
    """Time-major complex STFT matrix (frames x bins), FFT-shifted."""

    frames: np.ndarray
    nfft: int
    origin_sample: int = 0
    dropped_samples: int = 0
    window: Window = field(default=None, repr=False)

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.nfft:
            raise StructureError(f"frames must be (n_frames, {self.nfft}), got {self.frames.shape}")
        if self.origin_sample < 0 or int(self.origin_sample) != self.origin_sample:
            raise StructureError("origin_sample must be a non-negative integer")
        if self.window is None:
            object.__setattr__(self, "window", make_window(self.nfft))
        elif self.window.nfft != self.nfft:
            raise StructureError("window length does not match nfft")

    @property
    def hop(self) -> int:
        return self.nfft // 2

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_samples(self) -> int:
        """Length of the full-rate span covered by the frames."""
        if self.n_frames == 0:
            return 0
        return (self.n_frames - 1) * self.hop + self.nfft

    def valid_range(self) -> tuple[int, int]:
        """Absolute full-rate interval where two frames overlap (COLA holds)."""
        return (self.origin_sample + self.hop,
                self.origin_sample + self.n_frames * self.hop)


def _alternating(n: int, dtype) -> np.ndarray:
    # (-1)^n modulation; folds fftshift into the transform for even n
    return np.where(np.arange(n) % 2 == 0, 1, -1).astype(dtype)


def _real_dtype(x: np.ndarray):
    return np.float32 if x.dtype in (np.complex64, np.float32) else np.float64


def stft_forward(samples, nfft: int, origin_sample: int = 0, workers: int = -1) -> Spectrogram:
    """Half-overlap Hann STFT; trailing samples shorter than a hop are dropped."""
    window = make_window(nfft)
    x = np.asarray(samples)
    if x.dtype not in (np.complex64, np.complex128):
        x = x.astype(np.complex128)
    if x.ndim != 1:
        raise StructureError("samples must be one-dimensional")
    if len(x) < nfft:
        raise EmptySpectrogramError(f"{len(x)} samples is shorter than one {nfft}-point frame")
    hop = nfft // 2
    n_frames = (len(x) - nfft) // hop + 1
    used = (n_frames - 1) * hop + nfft
    rdt = _real_dtype(x)
    w = (window.coefficients * _alternating(nfft, np.float64)).astype(rdt)
    segs = np.lib.stride_tricks.sliding_window_view(x[:used], nfft)[::hop]
    frames = scipy.fft.fft(segs * w, axis=1, overwrite_x=True, workers=workers)
    return Spectrogram(frames, nfft, int(origin_sample), len(x) - used, window)


def psd(spec_or_frames, nfft: Optional[int] = None) -> np.ndarray:
    """|X|^2 scaled so complex white noise of variance s2 has mean s2 in every bin."""
    if isinstance(spec_or_frames, Spectrogram):
        frames, window = spec_or_frames.frames, spec_or_frames.window
    else:
        frames = np.asarray(spec_or_frames)
        window = make_window(nfft or frames.shape[-1])
    re = frames.real
    im = frames.imag
    p = re * re
    p += im * im
    p *= 1.0 / window.power
    return p


def _check_frames(spec: Spectrogram):
    if not isinstance(spec, Spectrogram):
        raise StructureError("expected a Spectrogram")
    if spec.n_frames == 0:
        raise StructureError("spectrogram has no frames")


def _overlap_add(segments: np.ndarray, hop: int) -> np.ndarray:
    # segments: (n_frames, 2*hop); frame m lands at [m*hop, m*hop + 2*hop)
    n_frames = segments.shape[0]
    out = np.zeros((n_frames + 1, hop), dtype=segments.dtype)
    out[:-1] += segments[:, :hop]
    out[1:] += segments[:, hop:]
    return out.ravel()


def istft_full(spec: Spectrogram) -> np.ndarray:
    """Overlap-add inverse. Output index n is full-rate sample origin_sample + n.

    Only :meth:`Spectrogram.valid_range` carries the reconstruction guarantee;
    the first and last hop see a single window.
    """
    _check_frames(spec)
    nfft = spec.nfft
    segs = scipy.fft.ifft(spec.frames, axis=1)
    segs *= _alternating(nfft, _real_dtype(segs))
    return _overlap_add(segs, spec.hop) / spec.window.cola_constant


def _check_partial(nfft: int, bin_start: int, nifft: int):
    if int(nifft) != nifft or nifft < 2 or nifft % 2 or nfft % nifft:
        raise ParameterError(f"nifft={nifft} must be even and divide nfft={nfft}")
    if bin_start < 0 or bin_start + nifft > nfft:
        raise ParameterError(f"bins [{bin_start}, {bin_start + nifft}) outside [0, {nfft})")


def partial_overlap_add(sub_frames: np.ndarray, nfft: int, bin_start: int,
                        frame_start: int = 0, cola_constant: float = 1.0) -> np.ndarray:
    """Decimated overlap-add of a contiguous block of bins.

    ``sub_frames`` holds ``nifft`` shifted bins starting at ``bin_start`` for
    frames ``frame_start, frame_start + 1, ...`` of the parent STFT.  The band
    center is mixed to DC with the mixing phase referenced to the parent
    origin, so sub-matrices cut from the same parent splice coherently.
    """
    nifft = sub_frames.shape[1]
    _check_partial(nfft, bin_start, nifft)
    shift = bin_start + nifft // 2 - nfft // 2
    local = scipy.fft.ifftshift(sub_frames, axes=1)
    segs = scipy.fft.ifft(local, axis=1)
    segs *= nifft / nfft / cola_constant
    if shift % 2:
        # per-frame mixing phase exp(-j*pi*shift*m) for absolute frame m
        m = frame_start + np.arange(sub_frames.shape[0])
        segs[m % 2 == 1] *= -1
    return _overlap_add(segs, nifft // 2)


def istft_partial(spec: Spectrogram, bin_start: int, nifft: int) -> tuple[np.ndarray, int]:
    """Invert bins [bin_start, bin_start + nifft) at rate F_S * nifft / nfft.

    Returns ``(samples, origin_sample)``; decimated sample j is full-rate
    sample ``origin_sample + j * (nfft // nifft)``.  The band center lands at DC.
    """
    _check_frames(spec)
    _check_partial(spec.nfft, bin_start, nifft)
    sub = spec.frames[:, bin_start:bin_start + nifft]
    out = partial_overlap_add(sub, spec.nfft, bin_start, 0, spec.window.cola_constant)
    return out, spec.origin_sample
