import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchscope.aoa import (angle_grid, dwell_phase, estimate_box_aoa, mle_scan, relative_phases,
                             wavelength_for)
from switchscope.errors import AlignmentError, GeometryError
from switchscope.iqcore import ArrayGeometry
from switchscope.ssfp import DecimatedStream, SwitchedSegment

from helpers import cnoise

LAM = 1.0
ULA8 = [i * 0.5 for i in range(8)]


def steer_phases(theta_deg, pos, lam=LAM):
    return -2 * np.pi / lam * np.asarray(pos) * np.sin(np.deg2rad(theta_deg))


def wrap(x):
    return np.angle(np.exp(1j * np.asarray(x)))


def make_cycle(rng, phases, q=16, noise=0.0):
    """Reference stream and one dwell per antenna with sw = ref * exp(j*phi)."""
    n = len(phases)
    ref = cnoise(rng, n * q)
    segs = []
    for i, ph in enumerate(phases):
        sw = ref[i * q:(i + 1) * q] * np.exp(1j * ph)
        if noise:
            sw = sw + cnoise(rng, q, noise)
        segs.append(SwitchedSegment(i, 0, sw, i * q, i))
    return DecimatedStream(ref, 0, 1), segs


class TestRelativePhases:
    def test_self(self, rng):
        stream, segs = make_cycle(rng, np.zeros(8))
        pv = relative_phases(segs, stream)
        assert np.allclose(pv.phases, 0, atol=1e-12)
        assert np.allclose(pv.magnitudes, 1.0)

    def test_constant_rotation(self, rng):
        stream, segs = make_cycle(rng, np.full(8, np.pi / 4))
        assert np.allclose(relative_phases(segs, stream).phases, np.pi / 4)

    def test_steering_30deg(self, rng):
        phi = -0.5 * np.pi * np.arange(8)
        stream, segs = make_cycle(rng, phi)
        assert np.allclose(relative_phases(segs, stream).phases, wrap(phi), atol=1e-12)

    def test_noise_coherence_low(self, rng):
        ref, sw = cnoise(rng, 4000), cnoise(rng, 4000)
        _, _, coh = dwell_phase(sw, ref)
        assert coh < 0.1

    def test_misaligned(self, rng):
        with pytest.raises(AlignmentError):
            dwell_phase(np.ones(4), np.ones(5))
        stream = DecimatedStream(np.ones(10, complex), 0, 1)
        with pytest.raises(IndexError):
            relative_phases([SwitchedSegment(0, 0, np.ones(4), 8)], stream)


class TestScan:
    def test_broadside(self):
        assert mle_scan(np.zeros(8), ULA8, LAM).angle_deg == 0.0

    def test_thirty(self):
        est = mle_scan(wrap(-0.5 * np.pi * np.arange(8)), ULA8, LAM)
        assert est.angle_deg == pytest.approx(30.0, abs=0.1)
        assert est.peak == pytest.approx(1.0)
        assert est.spectrum.argmax() == np.searchsorted(est.grid_deg, est.angle_deg)

    def test_two_antennas_broad(self):
        est = mle_scan(steer_phases(45, [0, 0.5]), [0, 0.5], LAM)
        assert est.angle_deg == pytest.approx(45, abs=1)
        # wide beam: the objective stays within 3 dB of the peak far from the true angle
        within = est.grid_deg[est.spectrum ** 2 >= 0.5 * est.peak ** 2]
        assert np.ptp(within) > 40

    def test_degenerate_geometry(self):
        with pytest.raises(GeometryError):
            mle_scan([0, 0, 0], [0.1, 0.1, 0.1], LAM)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(-899, 899))  # +-90 alias each other at half-wavelength spacing
    def test_noise_free_exact_on_grid(self, tenths):
        theta = tenths / 10
        assert mle_scan(steer_phases(theta, ULA8), ULA8, LAM).angle_deg == pytest.approx(theta, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-80, 80), st.floats(-np.pi, np.pi))
    def test_common_phase_invariant(self, theta, c):
        phi = steer_phases(theta, ULA8)
        assert mle_scan(phi + c, ULA8, LAM).angle_deg == mle_scan(phi, ULA8, LAM).angle_deg

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-80, 80))
    def test_reciprocity(self, theta):
        # symmetric positions around zero and a symmetric grid
        pos = np.arange(8) * 0.5 - 1.75
        phi = steer_phases(theta, pos)
        assert mle_scan(-phi, pos, LAM).angle_deg == -mle_scan(phi, pos, LAM).angle_deg

    def test_grid(self):
        g = angle_grid(0.1)
        assert len(g) == 1801 and g[0] == -90 and g[-1] == 90 and g[900] == 0


class _Inv:
    """Minimal stand-in for ssfp.InvertedBox built from explicit dwells."""

    def __init__(self, ref, segments, active, n_ant):
        from switchscope.ssfp import _group_cycles
        self.ref = ref
        self.segments = segments
        self.active = np.asarray(active)
        self.cycles = _group_cycles(segments, self.active, np.ones(len(segments)), n_ant)
        self.sw_dwells = None


def dwells(rng, theta, n_dwells, q=12, first=0, n_ant=8, pos=ULA8):
    ref = cnoise(rng, (first + n_dwells) * q)
    phi = steer_phases(theta, pos)
    segs = []
    for d in range(first, first + n_dwells):
        a = d % n_ant
        segs.append(SwitchedSegment(a, d // n_ant, ref[d * q:(d + 1) * q] * np.exp(1j * phi[a]), d * q, d))
    return DecimatedStream(ref, 0, 1), segs


class TestBoxAoA:
    geom = ArrayGeometry(tuple(ULA8))

    def test_two_cycles(self, rng):
        ref, segs = dwells(rng, 20, 16)
        out = estimate_box_aoa(_Inv(ref, segs, [True] * 16, 8), self.geom, LAM)
        assert len(out.estimates) == 2 and not out.reduced
        assert out.median_deg == pytest.approx(20, abs=0.1)
        assert [e.cycle_index for e in out.estimates] == [0, 1]

    def test_unaligned_start(self, rng):
        ref, segs = dwells(rng, -35, 8, first=5)
        out = estimate_box_aoa(_Inv(ref, segs, [True] * 8, 8), self.geom, LAM)
        assert len(out.estimates) == 1 and out.n_antennas_used == 8
        assert out.median_deg == pytest.approx(-35, abs=0.1)

    def test_reduced_aperture(self, rng):
        ref, segs = dwells(rng, 12, 4, first=2)
        out = estimate_box_aoa(_Inv(ref, segs, [True] * 4, 8), self.geom, LAM)
        assert out.reduced and out.n_antennas_used == 4
        assert out.median_deg == pytest.approx(12, abs=0.1)

    def test_subset(self, rng):
        ref, segs = dwells(rng, 40, 16)
        out = estimate_box_aoa(_Inv(ref, segs, [True] * 16, 8), self.geom, LAM, antenna_subset=[0, 1])
        assert out.n_antennas_used == 2 and len(out.estimates) == 2
        assert out.median_deg == pytest.approx(40, abs=0.1)

    def test_incoherent_cycle_dropped(self, rng):
        ref, segs = dwells(rng, 10, 16)
        segs[3] = SwitchedSegment(3, 0, cnoise(rng, 12) * 5, segs[3].fullrate_start, 3)
        out = estimate_box_aoa(_Inv(ref, segs, [True] * 16, 8), self.geom, LAM, min_coherence=0.9)
        assert len(out.estimates) == 1 and out.estimates[0].cycle_index == 1

    def test_nothing_usable(self, rng):
        ref, segs = dwells(rng, 10, 1)
        out = estimate_box_aoa(_Inv(ref, segs, [True], 8), self.geom, LAM)
        assert out.estimates == [] and np.isnan(out.median_deg)

    def test_wavelength(self):
        assert wavelength_for(2.55e9) == pytest.approx(0.11756, rel=1e-4)
