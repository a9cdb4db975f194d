import math
from fractions import Fraction

import numpy as np
import pytest

from switchscope.errors import PlanViolation, PreTriggerError, SynchronizationError
from switchscope.iqcore import stft_forward
from switchscope.searchlite import SubMatrix
from switchscope.ssfp import (SwitchPlan, antenna_at, invert_box, nfft_for, partial_size,
                              switch_time, switch_time_exact)

from helpers import cnoise

F_REF, F_S = 40_000_000, 30_720_000


class TestSwitchTime:
    def test_default(self):
        assert math.gcd(F_REF, F_S) == 320_000
        assert switch_time_exact(F_REF, F_S, 2) == Fraction(1, 160_000)
        assert switch_time(F_REF, F_S, 2) == pytest.approx(6.25e-6, rel=1e-15)

    def test_equal_clocks(self):
        t = switch_time_exact(10_000_000, 10_000_000, 1)
        assert t * 10_000_000 == 1

    def test_k1_samples(self):
        assert switch_time_exact(F_REF, F_S, 1) * F_S == 96

    @pytest.mark.parametrize("bad", [30.72e6 + 0.5, -1, 0])
    def test_non_integer_rejected(self, bad):
        with pytest.raises(ValueError):
            switch_time(F_REF, bad, 1)


class TestNfft:
    def test_default(self):
        assert nfft_for(Fraction(1, 160_000), F_S, 8) == 1536
        assert SwitchPlan(F_REF, F_S, 2, 8, 8).hop == 768 == 4 * 192

    def test_p2(self):
        assert nfft_for(6.25e-6, F_S, 2) == 384

    def test_odd_p(self):
        with pytest.raises(PlanViolation):
            nfft_for(6.25e-6, F_S, 3)


class TestPartialSize:
    def test_examples(self):
        assert partial_size(60, 8, 1536) == (64, 8)
        # no decimation: q is the full-rate dwell length nfft / p
        assert partial_size(1536, 8, 1536) == (1536, 192)
        assert partial_size(1, 8, 1536) == (8, 1)

    def test_smallest_valid(self):
        for req in range(1, 1537, 37):
            nifft, q = partial_size(req, 8, 1536)
            assert nifft >= req and nifft % 8 == 0 and 1536 % nifft == 0 and q == nifft // 8
            smaller = [m for m in range(8, nifft, 8) if 1536 % m == 0 and m >= req]
            assert not smaller


class TestPlan:
    def test_derived_fields(self):
        plan = SwitchPlan(F_REF, F_S, 2, 8, 8)
        assert (plan.nfft, plan.samples_per_switch_fullrate, plan.cycle_samples) == (1536, 192, 1536)

    @pytest.mark.parametrize("t_us,k,p", [(3.125, 1, 16), (6.25, 2, 8), (12.5, 4, 4), (25.0, 8, 2)])
    def test_switch_time_variants_keep_nfft(self, t_us, k, p):
        plan = SwitchPlan.from_switch_time(F_REF, F_S, t_us * 1e-6, p, 8)
        assert plan.k == k and plan.nfft == 1536

    def test_round_trip(self):
        plan = SwitchPlan(F_REF, F_S, 2, 8, 8, 4)
        assert SwitchPlan.from_dict(plan.to_dict()) == plan

    def test_tampered_sidecar(self):
        d = SwitchPlan(F_REF, F_S, 2, 8, 8).to_dict()
        d["nfft"] = 1024
        with pytest.raises(PlanViolation):
            SwitchPlan.from_dict(d)

    def test_blank_too_long(self):
        with pytest.raises(PlanViolation):
            SwitchPlan(F_REF, F_S, 1, 8, 8, blank_samples=96)

    def test_for_nfft(self):
        assert SwitchPlan.for_nfft(F_REF, F_S, 2, 768, 8).p == 4
        with pytest.raises(PlanViolation):
            SwitchPlan.for_nfft(F_REF, F_S, 2, 1000, 8)


class TestAntennaAt:
    plan = SwitchPlan(F_REF, F_S, 2, 8, 8)

    def test_examples(self):
        assert antenna_at(1000, 0, self.plan) == 5
        assert antenna_at(77, 77, self.plan) == 0
        assert antenna_at(1536, 0, self.plan) == 0

    def test_vectorized(self):
        n = np.arange(0, 3072)
        assert np.array_equal(antenna_at(n, 0, self.plan), (n // 192) % 8)

    def test_pre_trigger(self):
        with pytest.raises(PreTriggerError):
            antenna_at(5, 10, self.plan)


def test_boundary_grid_exhaustive():
    # every switch boundary lands on an integer decimated index, every dwell has q samples
    for k in range(1, 5):
        for p in (2, 4, 8, 16):
            plan = SwitchPlan(F_REF, F_S, k, p, 8, 0)
            S = plan.samples_per_switch_fullrate
            for q in range(1, 17):
                nifft = q * p
                if plan.nfft % nifft:
                    continue
                D = plan.nfft // nifft
                assert S % D == 0 and S // D == q
                boundaries = np.arange(0, 40) * S
                assert np.all(boundaries % D == 0)


def _box(x_ref, x_sw, plan, f0, n_frames, b0, nifft, origin=0):
    specs = [stft_forward(x, plan.nfft, origin) for x in (x_ref, x_sw)]
    return [SubMatrix(s.frames[f0:f0 + n_frames, b0:b0 + nifft], f0, b0, plan.nfft, origin) for s in specs]


class TestInvertBox:
    plan = SwitchPlan(F_REF, F_S, 2, 8, 8, blank_samples=0)

    def test_two_full_cycles(self, rng):
        x = cnoise(rng, 1536 * 6)
        subs = _box(x, x, self.plan, 0, 5, 736, 64)
        inv = invert_box(subs, self.plan, 0)
        assert inv.q == 8 and inv.nifft == 64
        assert len(inv.segments) == 16
        assert all(len(s.samples) == 8 for s in inv.segments)
        assert len(inv.cycles) == 2
        for cyc in inv.cycles:
            assert sorted(s.antenna_id for s in cyc) == list(range(8))

    def test_mid_dwell_start_discards_partial(self, rng):
        x = cnoise(rng, 1536 * 6)
        subs = _box(x, x, self.plan, 0, 5, 736, 64)
        inv = invert_box(subs, self.plan, 96)
        # first boundary after the covered start (768) is 96 + 4*192 = 864
        assert inv.segments[0].fullrate_start == 864
        assert len(inv.segments) == 15
        assert all(len(s.samples) == 8 for s in inv.segments)

    def test_zero_group_delay_mapping(self, rng):
        x = cnoise(rng, 1536 * 6)
        inv = invert_box(_box(x, x, self.plan, 0, 5, 736, 64), self.plan, 0)
        D = 1536 // 64
        for seg in inv.segments:
            j = inv.sw.index_of(seg.fullrate_start)
            assert seg.fullrate_start % D == 0
            assert j == (seg.fullrate_start - inv.sw.fullrate_start) // D
            assert np.array_equal(seg.samples, inv.sw.samples[j:j + 8])
            assert seg.antenna_id == antenna_at(seg.fullrate_start, 0, self.plan)

    def test_blanking_drops_leading_samples(self, rng):
        plan = SwitchPlan(F_REF, F_S, 2, 8, 8, blank_samples=30)
        x = cnoise(rng, 1536 * 6)
        inv = invert_box(_box(x, x, plan, 0, 5, 640, 256), plan, 0)
        D = 6
        assert all(len(s.samples) == 32 - 5 for s in inv.segments)
        assert all((s.fullrate_start - 30) % 192 == 0 for s in inv.segments)

    def test_fifty_microsecond_packet_one_cycle(self, rng):
        # packet covering exactly dwells 8..15 (one cycle), silence elsewhere
        plan = self.plan
        x = 1e-3 * cnoise(rng, 1536 * 8)
        x[1536:3072] += 10 * cnoise(rng, 1536)
        inv = invert_box(_box(x, x, plan, 0, 8, 640, 256), plan, 0)
        assert len(inv.cycles) == 1
        assert [s.dwell_index for s in inv.cycles[0]] == list(range(8, 16))

    def test_geometry_mismatch(self, rng):
        x = cnoise(rng, 1536 * 6)
        a, b = _box(x, x, self.plan, 0, 5, 736, 64)
        b = SubMatrix(b.data, b.frame_start, b.bin_start + 8, b.nfft, b.origin_sample)
        with pytest.raises(SynchronizationError):
            invert_box([a, b], self.plan, 0)

    def test_bad_width(self, rng):
        x = cnoise(rng, 1536 * 6)
        subs = _box(x, x, self.plan, 0, 5, 736, 40)
        with pytest.raises(PlanViolation):
            invert_box(subs, self.plan, 0)

    def test_trigger_off_grid(self, rng):
        x = cnoise(rng, 1536 * 6)
        with pytest.raises(PlanViolation):
            invert_box(_box(x, x, self.plan, 0, 5, 736, 64), self.plan, 5)
