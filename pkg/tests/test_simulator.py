import numpy as np
import pytest

from switchscope.aoa import relative_phases
from switchscope.errors import SceneError
from switchscope.iqcore import psd, stft_forward
from switchscope.simulator import (ArrayConfig, Emitter, RadioConfig, Ray, Scene, get_scene, load_scene,
                                   preset_scenarios, preset_family, synthesize, with_overrides)
from switchscope.ssfp import SwitchedSegment, DecimatedStream, antenna_at
from scipy.constants import speed_of_light

FC = 2.545e9


def tone_scene(aoa, spacing=0.0625, noise=0.0, blank=0, dur=2e-4, **kw):
    e = Emitter(0.0, 0.0, "tone", dur, dur, 0.0, aoa, 0.0)
    return Scene((e,), RadioConfig(duration_s=dur, noise_variance=noise, **kw),
                 ArrayConfig(8, spacing), blank_samples=blank)


def dwell_segments(cap, truth, n_dwells, skip=1):
    S = cap.plan.samples_per_switch_fullrate
    segs = []
    for d in range(skip, skip + n_dwells):
        a = cap.trigger_sample + d * S
        segs.append(SwitchedSegment(int(truth.port_log[a]), d // 8, np.asarray(cap.sw_samples[a:a + S]), a, d))
    return segs


class TestSynthesize:
    def test_zero_emitters_noise_psd(self):
        s = Scene((), RadioConfig(duration_s=0.4, noise_variance=2.5), seed=3)
        cap, truth = synthesize(s)
        assert truth.packets == []
        for ch in (cap.ref_samples, cap.sw_samples):
            per_bin = psd(stft_forward(ch, 1536).frames, 1536).mean(axis=0)
            # ~16000 frames per bin: sigma of the mean is under 1%, so 5% holds in every bin
            assert np.all(np.abs(per_bin / 2.5 - 1) < 0.05)

    def test_broadside_tone_equal(self):
        cap, _ = synthesize(tone_scene(0.0))
        assert np.array_equal(cap.sw_samples, cap.ref_samples)

    def test_thirty_deg_half_wavelength(self):
        lam = speed_of_light / FC
        cap, truth = synthesize(tone_scene(30.0, spacing=lam / 2, dur=4e-4))
        segs = sorted(dwell_segments(cap, truth, 8), key=lambda s: s.antenna_id)
        ref = DecimatedStream(np.asarray(cap.ref_samples), 0, 1)
        pv = relative_phases(segs, ref)
        want = np.angle(np.exp(-1j * np.pi / 2 * np.arange(8)))
        assert np.allclose(np.angle(np.exp(1j * (pv.phases - want))), 0, atol=1e-5)

    def test_interchain_offset(self):
        cap, _ = synthesize(tone_scene(0.0, interchain_phase_offset_rad=0.8))
        ratio = np.asarray(cap.sw_samples)[100] / np.asarray(cap.ref_samples)[100]
        assert np.angle(ratio) == pytest.approx(0.8, abs=1e-6)

    def test_blanking_zeros_transitions(self):
        cap, _ = synthesize(tone_scene(0.0, blank=10))
        S = cap.plan.samples_per_switch_fullrate
        sw = np.asarray(cap.sw_samples).reshape(-1, S)
        assert np.all(sw[:, :10] == 0) and np.all(sw[:, 10:] != 0)

    def test_port_log(self):
        s = with_overrides(tone_scene(0.0), trigger_sample=77)
        cap, truth = synthesize(s)
        n = len(truth.port_log)
        assert np.all(truth.port_log[:77] == -1)
        assert np.array_equal(truth.port_log[77:], antenna_at(np.arange(77, n), 77, cap.plan))

    def test_snr(self):
        e = Emitter(3e6, 5e6, "multitone", 100e-6, 200e-6, 0.0, 0.0, 12.0)
        cap, truth = synthesize(Scene((e,), RadioConfig(duration_s=0.02, noise_variance=0.5), seed=9))
        ref = np.asarray(cap.ref_samples)
        on = np.zeros(len(ref), bool)
        for p in truth.packets:
            on[p.start_sample:p.stop_sample] = True
        sig = np.mean(np.abs(ref[on]) ** 2) - np.mean(np.abs(ref[~on]) ** 2)
        assert 10 * np.log10(sig / 0.5) == pytest.approx(12.0, abs=0.5)

    @pytest.mark.parametrize("wave", ["tone", "noise-burst", "multitone"])
    def test_occupies_band(self, wave):
        e = Emitter(-6e6, 4e6, wave, 1e-3, 1e-3, 0.0, 0.0, 30.0)
        cap, _ = synthesize(Scene((e,), RadioConfig(duration_s=1e-3, noise_variance=1.0), seed=1))
        spec = psd(stft_forward(cap.ref_samples, 1536).frames, 1536).mean(axis=0)
        f = (np.arange(1536) - 768) * 20e3
        inband = np.abs(f + 6e6) < (1.5e6 if wave != "tone" else 30e3)
        far = np.abs(f + 6e6) > 3e6
        assert spec[inband].min() > 10 * np.median(spec[far])

    def test_deterministic(self):
        s = get_scene("multi_device")
        s = with_overrides(s, duration_s=0.005)
        a, ta = synthesize(s)
        b, tb = synthesize(s)
        assert np.array_equal(a.ref_samples, b.ref_samples) and np.array_equal(a.sw_samples, b.sw_samples)
        assert ta.packets == tb.packets
        c, _ = synthesize(with_overrides(s, seed=s.seed + 1))
        assert not np.array_equal(a.ref_samples, c.ref_samples)

    def test_multipath_rays_recorded(self):
        e = Emitter(0, 5e6, "multitone", 50e-6, 100e-6, 0.0, 10.0, 20.0,
                    (Ray(3, 0.5, None, True), Ray(5, 0.2 + 0.1j, -40.0)))
        _, truth = synthesize(Scene((e,), RadioConfig(duration_s=1e-3), seed=2))
        aoas = {p.rays[0][2] for p in truth.packets}
        assert len(aoas) == len(truth.packets)          # redrawn per packet
        assert all(p.rays[1] == (5, 0.2 + 0.1j, -40.0) for p in truth.packets)


class TestValidation:
    def test_nyquist_names_emitter(self):
        e = Emitter(14e6, 4e6, "multitone", 1e-4, 1e-3, name="loud")
        with pytest.raises(SceneError, match=r"emitter 0 \(loud\).*Nyquist"):
            Scene((e,)).validate()

    def test_packet_longer_than_period(self):
        with pytest.raises(SceneError, match="period"):
            Scene((Emitter(0, 1e6, "tone", 2e-3, 1e-3),)).validate()

    def test_bad_plan(self):
        with pytest.raises(SceneError, match="plan"):
            Scene((), p=3).validate()

    def test_yaml_line_number(self, tmp_path):
        f = tmp_path / "bad.yaml"
        f.write_text("radio:\n  duration_s: 0.01\nemitters:\n  - freq_offset_hz: [1, 2\n    bandwidth_hz: 1\n")
        with pytest.raises(SceneError, match=r"bad\.yaml:\d+"):
            load_scene(f)

    def test_roundtrip_file(self, tmp_path):
        s = get_scene("multi_device")
        import yaml
        f = tmp_path / "s.yaml"
        f.write_text(yaml.safe_dump(s.to_dict()))
        assert load_scene(f) == s

    def test_unknown_field(self):
        with pytest.raises(SceneError, match="unknown"):
            Scene.from_dict({"emitters": [{"freq_offset_hz": 0, "bandwidth_hz": 1, "colour": 3}]})


class TestPresets:
    def test_multi_device(self):
        s = preset_scenarios()["multi_device"]
        assert len(s.emitters) == 3
        assert sorted(e.aoa_deg for e in s.emitters) == [-51, -19, 34]

    def test_sweep(self):
        fam = preset_family("aoa_sweep")
        assert sorted(s.emitters[0].aoa_deg for s in fam) == list(range(-60, 61, 10))
        s = fam[0]
        assert s.emitters[0].n_packets == 500
        assert s.radio.center_freq_hz + s.emitters[0].freq_offset_hz == 2.55e9
        assert s.emitters[0].bandwidth_hz == 5e6

    def test_sweep_packet_count_synthesized(self):
        _, truth = synthesize(get_scene("aoa_sweep/+0"))
        assert len(truth.packets) == 500

    def test_switch_times(self):
        t = sorted(s.plan.t_sw_s * 1e6 for s in preset_family("switch_time"))
        assert t == pytest.approx([3.125, 6.25, 12.5, 25.0])
        assert all(s.plan.nfft == 1536 for s in preset_family("switch_time"))

    def test_short_packets(self):
        lens = sorted(s.emitters[0].packet_len_s for s in preset_family("short_packets"))
        assert lens == pytest.approx([25e-6, 50e-6])

    def test_all_valid(self):
        for s in preset_scenarios().values():
            s.validate()


def test_yaml_exponent_without_dot(tmp_path):
    f = tmp_path / "s.yaml"
    f.write_text("radio: {duration_s: 1e-3}\nemitters:\n  - {freq_offset_hz: 2e6, bandwidth_hz: 1e6}\n")
    s = load_scene(f)
    assert s.emitters[0].freq_offset_hz == 2e6 and s.radio.duration_s == 1e-3
    f.write_text("emitters:\n  - {freq_offset_hz: lots, bandwidth_hz: 1e6}\n")
    with pytest.raises(SceneError, match="freq_offset_hz must be a number"):
        load_scene(f)
