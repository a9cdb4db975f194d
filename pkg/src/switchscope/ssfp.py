"""Switch-synchronous Fourier processing.

Chooses switch dwell, FFT size and partial-IFFT size so that every antenna
switch lands on an integer sample of the decimated stream recovered from an
STFT sub-matrix, and maps recovered samples back to antenna ports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, PlanViolation, PreTriggerError, SynchronizationError
from .iqcore import partial_overlap_add

DEFAULT_BLANK_SAMPLES = 4


def _as_int_hz(value, name: str) -> int:
    if isinstance(value, bool):
        raise ParameterError(f"{name} must be a number")
    if isinstance(value, (int, np.integer)):
        v = int(value)
    else:
        f = float(value)
        if not math.isfinite(f) or f != round(f):
            raise ParameterError(f"{name}={value!r} is not an integer number of Hz")
        v = int(round(f))
    if v <= 0:
        raise ParameterError(f"{name} must be positive")
    return v


def switch_time_exact(f_refclk_hz, f_s_hz, k: int) -> Fraction:
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k}")
    g = math.gcd(_as_int_hz(f_refclk_hz, "f_refclk_hz"), _as_int_hz(f_s_hz, "f_s_hz"))
    return Fraction(int(k), g)


def switch_time(f_refclk_hz, f_s_hz, k: int) -> float:
    """Dwell time k / gcd(F_REFCLK, F_S) in seconds."""
    return float(switch_time_exact(f_refclk_hz, f_s_hz, k))


def nfft_for(t_sw_s, f_s_hz, p: int) -> int:
    """FFT size p * T_SW * F_S; p must be even so each half-overlap hop holds whole dwells."""
    if int(p) != p or p < 1:
        raise ParameterError(f"p must be a positive integer, got {p}")
    if p % 2:
        raise PlanViolation(f"p={p} is odd; the half-overlap hop would split a dwell")
    t = t_sw_s if isinstance(t_sw_s, Fraction) else Fraction(t_sw_s).limit_denominator(10 ** 12)
    per_switch = t * _as_int_hz(f_s_hz, "f_s_hz")
    if per_switch.denominator != 1:
        raise PlanViolation(f"T_SW * F_S = {float(per_switch)} is not an integer")
    return int(p) * int(per_switch)


def partial_size(required_bins: int, p: int, nfft: int) -> tuple[int, int]:
    """Smallest even nifft = q * p >= required_bins that divides nfft.

    Returns ``(nifft, q)``; falls back to ``(nfft, nfft // p)`` when no smaller
    size qualifies.
    """
    if required_bins < 1 or required_bins > nfft:
        raise ParameterError(f"required_bins={required_bins} outside [1, {nfft}]")
    if p < 1 or nfft % p:
        raise PlanViolation(f"p={p} does not divide nfft={nfft}")
    q = max(1, -(-required_bins // p))
    while q * p <= nfft:
        n = q * p
        if n % 2 == 0 and nfft % n == 0:
            return n, q
        q += 1
    return nfft, nfft // p


@dataclass(frozen=True)
class SwitchPlan:
    """Validated switch/FFT parameter bundle."""

    f_refclk_hz: int
    f_s_hz: int
    k: int
    p: int
    n_antennas: int
    blank_samples: int = DEFAULT_BLANK_SAMPLES
    t_sw_s: float = field(init=False)
    nfft: int = field(init=False)
    samples_per_switch_fullrate: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "f_refclk_hz", _as_int_hz(self.f_refclk_hz, "f_refclk_hz"))
        object.__setattr__(self, "f_s_hz", _as_int_hz(self.f_s_hz, "f_s_hz"))
        t = switch_time_exact(self.f_refclk_hz, self.f_s_hz, self.k)
        per_switch = t * self.f_s_hz
        object.__setattr__(self, "t_sw_s", float(t))
        object.__setattr__(self, "samples_per_switch_fullrate", int(per_switch))
        object.__setattr__(self, "nfft", nfft_for(t, self.f_s_hz, self.p))
        self.validate()

    @classmethod
    def from_switch_time(cls, f_refclk_hz, f_s_hz, t_sw_s: float, p: int, n_antennas: int,
                         blank_samples: int = DEFAULT_BLANK_SAMPLES) -> "SwitchPlan":
        base = switch_time_exact(f_refclk_hz, f_s_hz, 1)
        k = Fraction(t_sw_s).limit_denominator(10 ** 9) / base
        if abs(float(k) - round(float(k))) > 1e-6 or round(float(k)) < 1:
            raise PlanViolation(f"T_SW={t_sw_s} s is not a multiple of {float(base)} s")
        return cls(f_refclk_hz, f_s_hz, int(round(float(k))), p, n_antennas, blank_samples)

    @classmethod
    def for_nfft(cls, f_refclk_hz, f_s_hz, k: int, nfft: int, n_antennas: int,
                 blank_samples: int = DEFAULT_BLANK_SAMPLES) -> "SwitchPlan":
        s = switch_time_exact(f_refclk_hz, f_s_hz, k) * _as_int_hz(f_s_hz, "f_s_hz")
        if nfft % int(s):
            raise PlanViolation(f"nfft={nfft} is not a multiple of {int(s)} samples per switch")
        return cls(f_refclk_hz, f_s_hz, k, nfft // int(s), n_antennas, blank_samples)

    def validate(self):
        t = switch_time_exact(self.f_refclk_hz, self.f_s_hz, self.k)
        if (t * self.f_s_hz).denominator != 1 or (t * self.f_refclk_hz).denominator != 1:
            raise PlanViolation("switch boundaries do not align with both clocks")
        if self.nfft != self.p * self.samples_per_switch_fullrate:
            raise PlanViolation("nfft != p * T_SW * F_S")
        if self.p % 2 or self.nfft % 2:
            raise PlanViolation("p and nfft must be even")
        if self.n_antennas < 1:
            raise PlanViolation("n_antennas must be >= 1")
        if not 0 <= self.blank_samples < self.samples_per_switch_fullrate:
            raise PlanViolation(
                f"blank_samples={self.blank_samples} must be in [0, {self.samples_per_switch_fullrate})")

    @property
    def hop(self) -> int:
        return self.nfft // 2

    @property
    def cycle_samples(self) -> int:
        return self.n_antennas * self.samples_per_switch_fullrate

    def nifft_for(self, required_bins: int) -> tuple[int, int]:
        return partial_size(required_bins, self.p, self.nfft)

    def to_dict(self) -> dict:
        return {
            "f_refclk_hz": self.f_refclk_hz,
            "f_s_hz": self.f_s_hz,
            "k": self.k,
            "t_sw_s": self.t_sw_s,
            "p": self.p,
            "nfft": self.nfft,
            "n_antennas": self.n_antennas,
            "samples_per_switch_fullrate": self.samples_per_switch_fullrate,
            "blank_samples": self.blank_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchPlan":
        plan = cls(d["f_refclk_hz"], d["f_s_hz"], int(d["k"]), int(d["p"]),
                   int(d["n_antennas"]), int(d.get("blank_samples", DEFAULT_BLANK_SAMPLES)))
        # derived fields stored in the file must agree with the recomputed ones
        for key in ("nfft", "samples_per_switch_fullrate"):
            if key in d and int(d[key]) != getattr(plan, key):
                raise PlanViolation(f"stored {key}={d[key]} disagrees with derived {getattr(plan, key)}")
        if "t_sw_s" in d and not math.isclose(float(d["t_sw_s"]), plan.t_sw_s, rel_tol=1e-9):
            raise PlanViolation(f"stored t_sw_s={d['t_sw_s']} disagrees with derived {plan.t_sw_s}")
        return plan


def antenna_at(full_rate_sample, trigger_sample: int, plan: SwitchPlan):
    """Antenna port connected at a full-rate sample (scalar or array)."""
    s = np.asarray(full_rate_sample)
    if np.any(s < trigger_sample):
        raise PreTriggerError("sample precedes the switch trigger; switch is idle")
    port = ((s - trigger_sample) // plan.samples_per_switch_fullrate) % plan.n_antennas
    return int(port) if port.ndim == 0 else port


@dataclass(frozen=True)
class DecimatedStream:
    """Decimated samples with their full-rate index mapping."""

    samples: np.ndarray
    fullrate_start: int
    decimation: int

    def __len__(self):
        return len(self.samples)

    @property
    def fullrate_stop(self) -> int:
        return self.fullrate_start + len(self.samples) * self.decimation

    def index_of(self, fullrate_index: int) -> int:
        off = fullrate_index - self.fullrate_start
        if off % self.decimation:
            raise PlanViolation(f"full-rate sample {fullrate_index} is not on the decimated grid")
        return off // self.decimation

    def slice_fullrate(self, start: int, n: int) -> np.ndarray:
        i = self.index_of(start)
        if i < 0 or i + n > len(self.samples):
            raise IndexError("requested span outside the decimated stream")
        return self.samples[i:i + n]


@dataclass(frozen=True)
class SwitchedSegment:
    antenna_id: int
    cycle_index: int
    samples: np.ndarray
    fullrate_start: int
    dwell_index: int = 0


@dataclass
class InvertedBox:
    """Time-domain result of inverting one detection box on both channels."""

    ref: DecimatedStream
    sw: DecimatedStream
    segments: list          # every complete dwell, in time order
    cycles: list            # complete N-antenna groups of segments
    dwell_power: np.ndarray  # mean reference power per segment
    active: np.ndarray       # per-segment activity flags used for grouping
    nifft: int
    q: int
    ref_dwells: Optional[np.ndarray] = None   # (n_dwells, samples kept) aligned with segments
    sw_dwells: Optional[np.ndarray] = None

    @property
    def ref_iq(self) -> np.ndarray:
        return self.ref.samples

    @property
    def sw_segments(self) -> list:
        return self.segments


def active_runs(segments, active) -> list:
    """Runs (lists of segment indices) of consecutive active dwells."""
    runs, cur = [], []
    for t, seg in enumerate(segments):
        if not active[t]:
            cur = []
            continue
        if cur and segments[cur[-1]].dwell_index + 1 == seg.dwell_index:
            cur.append(t)
        else:
            cur = [t]
            runs.append(cur)
    return runs


def _group_cycles(segments, active, power, n_antennas):
    """Split runs of consecutive active dwells into N-dwell windows.

    Any N consecutive dwells visit every antenna once.  Within a run of length
    L the window offset maximizing enclosed reference power is used.
    """
    cycles = []
    for run in active_runs(segments, active):
        n_cyc = len(run) // n_antennas
        if not n_cyc:
            continue
        span = n_cyc * n_antennas
        best = max(range(len(run) - span + 1),
                   key=lambda o: (sum(power[t] for t in run[o:o + span]), -o))
        for c in range(n_cyc):
            idx = run[best + c * n_antennas: best + (c + 1) * n_antennas]
            cycles.append([segments[t] for t in idx])
    return cycles


def invert_box(sub_matrices: Sequence, plan: SwitchPlan, trigger_sample: int,
               activity_ratio: float = 0.1) -> InvertedBox:
    """Invert reference and switched sub-matrices and cut the switched stream into dwells.

    ``sub_matrices`` is ``(ref, sw)`` as returned by
    :func:`switchscope.searchlite.excise_submatrices`.  Dwells not fully inside
    the fully-covered interval are discarded, the first
    ``ceil(blank_samples / decimation)`` samples of each dwell are dropped, and
    dwells whose reference power falls below ``activity_ratio`` times the
    strongest dwell are left out of cycle grouping.
    """
    ref_sm, sw_sm = sub_matrices[0], sub_matrices[1]
    for sm in (ref_sm, sw_sm):
        if sm.nfft != plan.nfft:
            raise PlanViolation(f"sub-matrix nfft={sm.nfft} differs from plan nfft={plan.nfft}")
    if (ref_sm.data.shape != sw_sm.data.shape or ref_sm.frame_start != sw_sm.frame_start
            or ref_sm.bin_start != sw_sm.bin_start or ref_sm.origin_sample != sw_sm.origin_sample):
        raise SynchronizationError("reference and switched sub-matrices differ in geometry")
    n_frames, nifft = ref_sm.data.shape
    if nifft % 2 or plan.nfft % nifft or nifft % plan.p:
        raise PlanViolation(f"sub-matrix width {nifft} is not a valid partial size for p={plan.p}")
    if n_frames < 2:
        raise PlanViolation("at least two frames are needed for a fully covered interval")
    dec = plan.nfft // nifft
    q = nifft // plan.p
    S = plan.samples_per_switch_fullrate
    hop = plan.hop

    streams = []
    for sm in (ref_sm, sw_sm):
        y = partial_overlap_add(sm.data, plan.nfft, sm.bin_start, sm.frame_start)
        start = sm.origin_sample + sm.frame_start * hop
        # keep only the interval covered by two windows
        lo, hi = hop // dec, n_frames * hop // dec
        streams.append(DecimatedStream(y[lo:hi], start + hop, dec))
    ref, sw = streams

    if (ref.fullrate_start - trigger_sample) % dec:
        raise PlanViolation("switch trigger is not on the decimated sample grid")
    first = max(0, -(-(ref.fullrate_start - trigger_sample) // S))
    last = (ref.fullrate_stop - trigger_sample) // S   # exclusive
    # never blank a whole dwell, even when decimation is coarse
    n_blank = min(-(-plan.blank_samples // dec), q - 1)
    # dwells tile the decimated grid: dwell d covers q samples from trigger + d*S
    n_dw = max(0, last - first)
    i0 = ref.index_of(trigger_sample + first * S)
    ref_dw = ref.samples[i0:i0 + n_dw * q].reshape(n_dw, q)[:, n_blank:]
    sw_dw = sw.samples[i0:i0 + n_dw * q].reshape(n_dw, q)[:, n_blank:]
    segments = [SwitchedSegment(d % plan.n_antennas, d // plan.n_antennas, sw_dw[t],
                                trigger_sample + d * S + n_blank * dec, d)
                for t, d in enumerate(range(first, first + n_dw))]
    power = np.mean(np.abs(ref_dw) ** 2, axis=1) if n_dw else np.zeros(0)
    if len(power) and power.max() > 0:
        active = power >= activity_ratio * power.max()
    else:
        active = np.zeros(len(power), dtype=bool)
    cycles = _group_cycles(segments, active, power, plan.n_antennas)
    return InvertedBox(ref, sw, segments, cycles, power, active, nifft, q, ref_dw, sw_dw)
