"""Per-antenna phase extraction and maximum-likelihood angle-of-arrival scan."""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.constants import speed_of_light

from .errors import AlignmentError, GeometryError, ParameterError
from .iqcore import ArrayGeometry
from .ssfp import InvertedBox, active_runs

DEFAULT_GRID_STEP_DEG = 0.1
DEFAULT_MIN_COHERENCE = 0.2


@dataclass(frozen=True)
class PhaseVector:
    """Phase of each switched antenna relative to the reference, for one cycle.

    ``magnitudes`` are per-dwell coherences |sum| / sum|.| in [0, 1];
    ``correlation`` keeps the raw |sum|.
    """

    phases: np.ndarray
    cycle_index: int
    magnitudes: np.ndarray
    antenna_ids: tuple
    correlation: Optional[np.ndarray] = None

    @property
    def min_coherence(self) -> float:
        return float(np.min(self.magnitudes)) if len(self.magnitudes) else 0.0


def dwell_phase(sw: np.ndarray, ref: np.ndarray) -> tuple[float, float, float]:
    """``(phase, magnitude, coherence)`` of sum(sw * conj(ref)).

    Coherence is |sum| / sum|.|: 1 for a constant phase difference, about
    1/sqrt(n) for independent noise.
    """
    sw = np.asarray(sw)
    ref = np.asarray(ref)
    if sw.shape != ref.shape:
        raise AlignmentError(f"dwell lengths differ: {sw.shape} vs {ref.shape}")
    if sw.size == 0:
        raise AlignmentError("empty dwell")
    prod = sw * np.conj(ref)
    total = prod.sum()
    denom = np.abs(prod).sum()
    coh = float(abs(total) / denom) if denom > 0 else 0.0
    return float(np.angle(total)), float(abs(total)), coh


def dwell_phase_table(sw_rows: np.ndarray, ref_rows: np.ndarray):
    """Vectorized :func:`dwell_phase` over rows of equal-length dwells."""
    if sw_rows.shape != ref_rows.shape:
        raise AlignmentError(f"dwell matrices differ: {sw_rows.shape} vs {ref_rows.shape}")
    prod = sw_rows * np.conj(ref_rows)
    total = prod.sum(axis=1)
    denom = np.abs(prod).sum(axis=1)
    mag = np.abs(total)
    coh = np.divide(mag, denom, out=np.zeros_like(mag), where=denom > 0)
    return np.angle(total), mag, coh


def relative_phases(segments: Sequence, ref_stream, cycle_index: Optional[int] = None) -> PhaseVector:
    """Phase vector for a group of dwells against the time-aligned reference samples.

    ``segments`` carry ``antenna_id``, ``samples`` and ``fullrate_start``;
    ``ref_stream`` is a :class:`~switchscope.ssfp.DecimatedStream`.
    """
    if not segments:
        raise AlignmentError("no dwells to compare")
    out = [dwell_phase(s.samples, ref_stream.slice_fullrate(s.fullrate_start, len(s.samples)))
           for s in segments]
    ph, mag, coh = (np.array(v) for v in zip(*out))
    ids = tuple(s.antenna_id for s in segments)
    if len(set(ids)) != len(ids):
        raise AlignmentError(f"antenna repeated within one cycle: {ids}")
    idx = segments[0].cycle_index if cycle_index is None else cycle_index
    return PhaseVector(ph, idx, coh, ids, mag)


@dataclass(frozen=True)
class AoAEstimate:
    angle_deg: float
    peak: float                    # |sum| / N at the peak, 1 for a perfect fit
    grid_deg: np.ndarray = field(repr=False)
    spectrum: np.ndarray = field(repr=False)
    cycle_index: int = 0
    f_c_hz: Optional[float] = None


def angle_grid(step_deg: float = DEFAULT_GRID_STEP_DEG) -> np.ndarray:
    if step_deg <= 0:
        raise ParameterError("grid step must be positive")
    n = int(round(180.0 / step_deg))
    return np.round(np.linspace(-90.0, 90.0, n + 1), 9)


@functools.lru_cache(maxsize=256)
def _steering(positions_m: tuple, wavelength_m: float, grid_step_deg: float) -> np.ndarray:
    pos = np.asarray(positions_m, dtype=np.float64)
    if len(pos) < 2 or np.ptp(pos) == 0:
        raise GeometryError("need at least two distinct antenna positions")
    if wavelength_m <= 0:
        raise ParameterError("wavelength must be positive")
    k = 2 * np.pi / wavelength_m
    A = np.exp(1j * k * np.outer(np.sin(np.deg2rad(angle_grid(grid_step_deg))), pos))
    A.setflags(write=False)
    return A


def mle_scan_many(phase_rows: np.ndarray, positions_m, wavelength_m: float,
                  grid_step_deg: float = DEFAULT_GRID_STEP_DEG) -> list:
    """Vectorized :func:`mle_scan` for rows of phases sharing one geometry."""
    phase_rows = np.atleast_2d(np.asarray(phase_rows, dtype=np.float64))
    grid = angle_grid(grid_step_deg)
    A = _steering(tuple(float(x) for x in positions_m), float(wavelength_m), float(grid_step_deg))
    if phase_rows.shape[1] != A.shape[1]:
        raise GeometryError(f"{phase_rows.shape[1]} phases for {A.shape[1]} antenna positions")
    obj = np.abs(np.exp(1j * phase_rows) @ A.T) / A.shape[1]  # (C, G)
    best = np.argmax(obj, axis=1)
    return [AoAEstimate(float(grid[b]), float(o[b]), grid, o) for b, o in zip(best, obj)]


def mle_scan(phases, positions_m, wavelength_m: float,
             grid_step_deg: float = DEFAULT_GRID_STEP_DEG) -> AoAEstimate:
    """Grid search of |sum_i exp(j*(2*pi/lambda)*x_i*sin(theta)) * exp(j*phi_i)|.

    An antenna at x sees a path delay of x*sin(theta)/c relative to the origin,
    i.e. a measured phase of -(2*pi/lambda)*x*sin(theta); the steering term
    undoes that.  A common phase offset does not change the result.

    >>> round(mle_scan([0, -np.pi / 2, -np.pi, -3 * np.pi / 2], [0, .5, 1, 1.5], 1.0).angle_deg, 1)
    30.0
    """
    return mle_scan_many(np.asarray(phases)[None, :], positions_m, wavelength_m, grid_step_deg)[0]


@dataclass
class BoxAoA:
    estimates: list                 # AoAEstimate per retained cycle
    cycle_indices: list
    median_deg: float
    n_antennas_used: int
    reduced: bool
    coherence: float                # mean coherence over retained cycles
    f_c_hz: Optional[float] = None

    @property
    def angles_deg(self) -> list:
        return [e.angle_deg for e in self.estimates]

    def to_record(self) -> dict:
        return {"angle_deg": self.angles_deg,
                "aoa_median_deg": None if np.isnan(self.median_deg) else self.median_deg,
                "n_antennas_used": self.n_antennas_used,
                "reduced_aperture": self.reduced,
                "coherence": self.coherence,
                "f_c_hz": self.f_c_hz}


def wavelength_for(freq_hz: float) -> float:
    if freq_hz <= 0:
        raise ParameterError("RF frequency must be positive")
    return speed_of_light / freq_hz


def estimate_box_aoa(inv: InvertedBox, geometry: ArrayGeometry, wavelength_m: float,
                     grid_step_deg: float = DEFAULT_GRID_STEP_DEG,
                     min_coherence: float = DEFAULT_MIN_COHERENCE,
                     antenna_subset: Optional[Sequence[int]] = None) -> BoxAoA:
    """One estimate per complete cycle; falls back to a partial-aperture estimate.

    Cycles whose weakest dwell coherence is below ``min_coherence`` are
    skipped.  Without any usable complete cycle, the longest run of active
    dwells covering at least two distinct antennas gives a single
    ``reduced`` estimate.
    """
    subset = tuple(range(geometry.n_antennas)) if antenna_subset is None else tuple(antenna_subset)
    if any(a < 0 or a >= geometry.n_antennas for a in subset) or len(set(subset)) < 2:
        raise GeometryError(f"antenna subset {subset} invalid for {geometry.n_antennas} antennas")
    pos_all = np.asarray(geometry.positions_m)

    table = None
    if inv.sw_dwells is not None and inv.segments:
        table = dwell_phase_table(inv.sw_dwells, inv.ref_dwells)
        d0 = inv.segments[0].dwell_index

    def vector(segs):
        segs = sorted((s for s in segs if s.antenna_id in subset), key=lambda s: s.antenna_id)
        if not segs:
            return None
        if table is None:
            return relative_phases(segs, inv.ref)
        rows = [s.dwell_index - d0 for s in segs]
        return PhaseVector(table[0][rows], segs[0].cycle_index, table[2][rows],
                           tuple(s.antenna_id for s in segs), table[1][rows])

    f_c = speed_of_light / wavelength_m
    rows, idx, cohs = [], [], []
    for cyc in inv.cycles:
        pv = vector(cyc)
        if pv is None or pv.min_coherence < min_coherence:
            continue
        rows.append(pv.phases)
        idx.append(pv.cycle_index)
        cohs.append(float(np.mean(pv.magnitudes)))
    if rows:
        pos = pos_all[list(sorted(subset))]
        ests = [dataclasses.replace(e, cycle_index=c, f_c_hz=f_c)
                for e, c in zip(mle_scan_many(np.array(rows), pos, wavelength_m, grid_step_deg), idx)]
        return BoxAoA(ests, idx, float(np.median([e.angle_deg for e in ests])), len(subset), False,
                      float(np.mean(cohs)), f_c)

    # partial aperture: longest active run, first visit of each antenna
    best = None
    for run in active_runs(inv.segments, inv.active):
        seen = {}
        for t in run:
            seg = inv.segments[t]
            if seg.antenna_id in subset and seg.antenna_id not in seen:
                seen[seg.antenna_id] = seg
        if len(seen) >= 2 and (best is None or len(seen) > len(best)):
            best = seen
    if best is not None:
        pv = vector(best.values())
        ids = list(pv.antenna_ids)
        if np.ptp(pos_all[ids]) > 0 and pv.min_coherence >= min_coherence:
            est = dataclasses.replace(mle_scan(pv.phases, pos_all[ids], wavelength_m, grid_step_deg),
                                      cycle_index=pv.cycle_index, f_c_hz=f_c)
            return BoxAoA([est], [pv.cycle_index], est.angle_deg, len(ids), True,
                          float(np.mean(pv.magnitudes)), f_c)
    return BoxAoA([], [], float("nan"), 0, True, 0.0, f_c)
