"""Ground-truth scene synthesis for a reference antenna plus a switched array.

Far-field narrowband model: every antenna sees the emitter's baseband
waveform multiplied by its steering phase.  The switched port follows the
switch plan from the trigger sample, with the first ``blank_samples`` after
each transition zeroed before noise is added.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from scipy.constants import speed_of_light

from .errors import ParameterError, PlanViolation, SceneError
from .iqcore import ArrayGeometry, IQCapture
from .ssfp import DEFAULT_BLANK_SAMPLES, SwitchPlan, antenna_at

WAVEFORMS = ("tone", "noise-burst", "multitone")
N_SUBCARRIERS = 64
SYMBOL_TAPER = 0.25          # fraction of a multitone symbol spent crossfading


def _numbers(d: dict, cls, what: str) -> dict:
    """Coerce numeric fields; YAML reads ``15e6`` (no dot) as a string."""
    out = dict(d)
    for f in cls.__dataclass_fields__.values():
        v = out.get(f.name)
        if isinstance(v, str) and f.type in ("float", "int", "Optional[float]", "Optional[int]"):
            try:
                out[f.name] = float(v) if "float" in f.type else int(v)
            except ValueError:
                raise SceneError(f"{what}: {f.name} must be a number, got {v!r}") from None
    return out


@dataclass(frozen=True)
class Ray:
    """Extra propagation path.  ``aoa_deg=None`` draws a uniform angle per packet."""

    delay_samples: int = 0
    complex_gain: complex = 0.5
    aoa_deg: Optional[float] = None
    random_phase: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "Ray":
        g = d.get("complex_gain", 0.5)
        if isinstance(g, dict):
            g = complex(g.get("re", 0.0), g.get("im", 0.0))
        elif isinstance(g, (list, tuple)):
            g = complex(g[0], g[1])
        return cls(int(d.get("delay_samples", 0)), complex(g), d.get("aoa_deg"),
                   bool(d.get("random_phase", False)))

    def to_dict(self) -> dict:
        return {"delay_samples": self.delay_samples,
                "complex_gain": [self.complex_gain.real, self.complex_gain.imag],
                "aoa_deg": self.aoa_deg, "random_phase": self.random_phase}


@dataclass(frozen=True)
class Emitter:
    freq_offset_hz: float
    bandwidth_hz: float
    waveform: str = "multitone"
    packet_len_s: float = 100e-6
    period_s: float = 1e-3
    first_start_s: float = 0.0
    aoa_deg: float = 0.0
    snr_db: float = 20.0
    multipath: tuple = ()
    n_packets: Optional[int] = None      # None: as many as fit in the capture
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "Emitter":
        d = dict(d)
        d["multipath"] = tuple(Ray.from_dict(r) for r in d.get("multipath") or ())
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SceneError(f"unknown emitter field(s): {sorted(unknown)}")
        return cls(**_numbers(d, cls, "emitter"))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["multipath"] = [r.to_dict() for r in self.multipath]
        return d


@dataclass(frozen=True)
class RadioConfig:
    f_s_hz: int = 30_720_000
    f_refclk_hz: int = 40_000_000
    center_freq_hz: float = 2.545e9
    duration_s: float = 0.01
    noise_variance: float = 1.0
    interchain_phase_offset_rad: float = 0.0
    trigger_sample: int = 0


@dataclass(frozen=True)
class ArrayConfig:
    n_antennas: int = 8
    spacing_m: Optional[float] = 0.0625
    positions_m: Optional[tuple] = None
    reference_position_m: float = 0.0

    def geometry(self) -> ArrayGeometry:
        if self.positions_m is not None:
            pos = tuple(self.positions_m)
            if len(pos) != self.n_antennas:
                raise SceneError(f"{len(pos)} positions given for n_antennas={self.n_antennas}")
            return ArrayGeometry(pos, self.reference_position_m)
        return ArrayGeometry.uniform(self.n_antennas, self.spacing_m, self.reference_position_m)


@dataclass(frozen=True)
class Scene:
    emitters: tuple
    radio: RadioConfig = RadioConfig()
    array: ArrayConfig = ArrayConfig()
    k: int = 2
    p: int = 8
    blank_samples: int = DEFAULT_BLANK_SAMPLES
    seed: int = 0
    name: str = ""

    @property
    def plan(self) -> SwitchPlan:
        return SwitchPlan(self.radio.f_refclk_hz, self.radio.f_s_hz, self.k, self.p,
                          self.array.n_antennas, self.blank_samples)

    @property
    def n_samples(self) -> int:
        return int(round(self.radio.duration_s * self.radio.f_s_hz))

    def validate(self) -> "Scene":
        r = self.radio
        if r.f_s_hz <= 0 or r.duration_s <= 0 or r.noise_variance < 0:
            raise SceneError("radio: f_s_hz and duration_s must be positive, noise_variance >= 0")
        try:
            self.plan
        except PlanViolation as exc:
            raise SceneError(f"plan: {exc}") from exc
        self.array.geometry()
        for i, e in enumerate(self.emitters):
            label = f"emitter {i}" + (f" ({e.name})" if e.name else "")
            if e.waveform not in WAVEFORMS:
                raise SceneError(f"{label}: waveform must be one of {WAVEFORMS}, got {e.waveform!r}")
            if e.bandwidth_hz < 0 or (e.waveform != "tone" and e.bandwidth_hz == 0):
                raise SceneError(f"{label}: bandwidth_hz must be positive")
            if abs(e.freq_offset_hz) + e.bandwidth_hz / 2 > r.f_s_hz / 2:
                raise SceneError(
                    f"{label}: Nyquist violation, |freq_offset_hz| + bandwidth_hz/2 = "
                    f"{abs(e.freq_offset_hz) + e.bandwidth_hz / 2:g} Hz > F_S/2 = {r.f_s_hz / 2:g} Hz")
            if not 0 < e.packet_len_s <= e.period_s:
                raise SceneError(f"{label}: need 0 < packet_len_s <= period_s")
            if e.first_start_s < 0 or e.first_start_s + e.packet_len_s > r.duration_s:
                raise SceneError(f"{label}: capture of {r.duration_s} s does not hold one packet")
            if not -90 <= e.aoa_deg <= 90:
                raise SceneError(f"{label}: aoa_deg outside [-90, 90]")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        if not isinstance(d, dict):
            raise SceneError("scene must be a mapping")
        try:
            radio = RadioConfig(**_numbers(d.get("radio") or {}, RadioConfig, "radio"))
            arr = dict(d.get("array") or {})
            if "positions_m" in arr and arr["positions_m"] is not None:
                arr["positions_m"] = tuple(arr["positions_m"])
                arr.setdefault("n_antennas", len(arr["positions_m"]))
            array = ArrayConfig(**arr)
            plan = dict(d.get("plan") or {})
            emitters = tuple(Emitter.from_dict(e) for e in d.get("emitters") or ())
        except TypeError as exc:
            raise SceneError(f"bad scene field: {exc}") from exc
        unknown_plan = set(plan) - {"k", "p", "blank_samples"}
        if unknown_plan:
            raise SceneError(f"unknown plan field(s): {sorted(unknown_plan)}")
        return cls(emitters, radio, array, int(plan.get("k", 2)), int(plan.get("p", 8)),
                   int(plan.get("blank_samples", DEFAULT_BLANK_SAMPLES)),
                   int(d.get("seed", 0)), str(d.get("name", ""))).validate()

    def to_dict(self) -> dict:
        a = self.array
        return {
            "name": self.name, "seed": self.seed,
            "radio": dict(vars(self.radio)),
            "array": {"n_antennas": a.n_antennas, "spacing_m": a.spacing_m,
                      "positions_m": None if a.positions_m is None else list(a.positions_m),
                      "reference_position_m": a.reference_position_m},
            "plan": {"k": self.k, "p": self.p, "blank_samples": self.blank_samples},
            "emitters": [e.to_dict() for e in self.emitters],
        }


def load_scene(path) -> Scene:
    """Read a YAML (or JSON) scene file; parse errors carry the line number."""
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise SceneError(f"{where}: {getattr(exc, 'problem', None) or exc}") from exc
    return Scene.from_dict(data)


# ---------------------------------------------------------------- ground truth

@dataclass(frozen=True)
class PacketTruth:
    emitter: int
    start_sample: int
    stop_sample: int
    freq_lo_hz: float                 # absolute RF band edges
    freq_hi_hz: float
    aoa_deg: float
    rays: tuple = ()                  # realized (delay, gain, aoa) of extra paths

    @property
    def center_freq_hz(self) -> float:
        return 0.5 * (self.freq_lo_hz + self.freq_hi_hz)


@dataclass
class GroundTruth:
    packets: list
    port_log: np.ndarray = field(repr=False)      # antenna per sample, -1 before trigger
    scene: Optional[Scene] = None

    def to_dict(self) -> dict:
        return {"packets": [vars(p) | {"rays": [list(map(_jsonable, r)) for r in p.rays]}
                            for p in self.packets],
                "scene": self.scene.to_dict() if self.scene else None}


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


# ---------------------------------------------------------------- waveforms

def _baseband(e: Emitter, n: int, t0: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-power packet of ``n`` samples, already shifted to ``freq_offset_hz``.

    The carrier phase is referenced to absolute sample ``t0`` so repeated
    packets of a tone stay phase-continuous.
    """
    t = (t0 + np.arange(n)) / fs
    if e.waveform == "tone":
        x = np.ones(n, dtype=np.complex128)
    elif e.waveform == "noise-burst":
        nfft = 1 << max(1, (n - 1).bit_length())
        spec = rng.standard_normal(nfft) + 1j * rng.standard_normal(nfft)
        f = np.fft.fftfreq(nfft, 1 / fs)
        spec[np.abs(f) > e.bandwidth_hz / 2] = 0
        x = np.fft.ifft(spec)[:n]
    else:
        df = e.bandwidth_hz / N_SUBCARRIERS
        pos = (t - t[0]) * df
        sym = np.floor(pos).astype(int)
        qpsk = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, (sym[-1] + 1, N_SUBCARRIERS))))
        z = np.exp(2j * np.pi * df * t)
        x = _multitone(qpsk, sym, z)
        # raised-cosine crossfade from the previous symbol keeps out-of-band splatter low
        frac = pos - sym
        fade = (frac < SYMBOL_TAPER) & (sym > 0)
        if fade.any():
            w = 0.5 - 0.5 * np.cos(np.pi * frac[fade] / SYMBOL_TAPER)
            x[fade] = w * x[fade] + (1 - w) * _multitone(qpsk, sym[fade] - 1, z[fade])
        x *= np.exp(-2j * np.pi * df * (N_SUBCARRIERS - 1) / 2 * t)
        ramp = min(n // 2, int(round(SYMBOL_TAPER * fs / df)))
        if ramp:
            edge = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
            x[:ramp] *= edge
            x[n - ramp:] *= edge[::-1]
    p = np.mean(np.abs(x) ** 2)
    if p > 0:
        x = x / math.sqrt(p)
    return x * np.exp(2j * np.pi * e.freq_offset_hz * t)


def _multitone(coeffs: np.ndarray, sym: np.ndarray, z: np.ndarray) -> np.ndarray:
    """sum_k coeffs[sym, k] * z**k evaluated by Horner's rule."""
    x = np.zeros(len(z), dtype=np.complex128)
    for k in range(coeffs.shape[1] - 1, -1, -1):
        x *= z
        x += coeffs[sym, k]
    return x


def packet_starts(e: Emitter, fs: float, n_total: int) -> list:
    starts = []
    i = 0
    L = int(round(e.packet_len_s * fs))
    while e.n_packets is None or i < e.n_packets:
        s = int(round((e.first_start_s + i * e.period_s) * fs))
        if s + L > n_total:
            break
        starts.append(s)
        i += 1
    return starts


def steering(positions_m, aoa_deg: float, freq_hz: float) -> np.ndarray:
    """Per-antenna phase factor exp(-j*(2*pi/lambda)*x*sin(theta))."""
    k = 2 * np.pi * freq_hz / speed_of_light
    return np.exp(-1j * k * np.asarray(positions_m) * math.sin(math.radians(aoa_deg)))


def port_log(n_samples: int, trigger_sample: int, plan: SwitchPlan) -> np.ndarray:
    ports = np.full(n_samples, -1, dtype=np.int16)
    if trigger_sample < n_samples:
        ports[trigger_sample:] = antenna_at(np.arange(trigger_sample, n_samples), trigger_sample, plan)
    return ports


def synthesize(scene: Scene) -> tuple[IQCapture, GroundTruth]:
    """Render a scene into a two-channel capture and its ground truth."""
    scene.validate()
    r = scene.radio
    plan = scene.plan
    geom = scene.array.geometry()
    fs = float(r.f_s_hz)
    n_total = scene.n_samples
    ss = np.random.SeedSequence(scene.seed)
    wave_ss, noise_ss = ss.spawn(2)
    wave_rng = np.random.default_rng(wave_ss)

    ports = port_log(n_total, r.trigger_sample, plan)
    S = plan.samples_per_switch_fullrate
    ant_pos = np.asarray(geom.positions_m)
    ref = np.zeros(n_total, dtype=np.complex64)
    sw = np.zeros(n_total, dtype=np.complex64)
    packets = []

    for ei, e in enumerate(scene.emitters):
        f_rf = r.center_freq_hz + e.freq_offset_hz
        amp = math.sqrt(r.noise_variance * 10 ** (e.snr_db / 10)) if r.noise_variance > 0 \
            else 10 ** (e.snr_db / 20)
        L = int(round(e.packet_len_s * fs))
        for s0 in packet_starts(e, fs, n_total):
            x = amp * _baseband(e, L, s0, fs, wave_rng)
            paths = [(0, 1.0 + 0j, e.aoa_deg)]
            realized = []
            for ray in e.multipath:
                aoa = ray.aoa_deg if ray.aoa_deg is not None else float(wave_rng.uniform(-90, 90))
                g = ray.complex_gain
                if ray.random_phase:
                    g = abs(g) * np.exp(2j * np.pi * wave_rng.uniform())
                paths.append((ray.delay_samples, complex(g), aoa))
                realized.append((ray.delay_samples, complex(g), aoa))
            for delay, g, aoa in paths:
                a, b = s0 + delay, min(n_total, s0 + delay + L)
                if a >= b:
                    continue
                seg = g * x[:b - a]
                sv = steering(ant_pos, aoa, f_rf)
                sv_ref = steering([geom.reference_position_m], aoa, f_rf)[0]
                ref[a:b] += (seg * sv_ref).astype(np.complex64)
                p = ports[a:b]
                on = p >= 0
                idx = np.arange(a, b)
                # switch transition: connected port output is zero while settling
                on &= (idx - r.trigger_sample) % S >= plan.blank_samples
                sw_seg = np.where(on, seg * sv[np.maximum(p, 0)], 0)
                sw[a:b] += sw_seg.astype(np.complex64)
            packets.append(PacketTruth(ei, s0, s0 + L, f_rf - e.bandwidth_hz / 2,
                                       f_rf + e.bandwidth_hz / 2, e.aoa_deg, tuple(realized)))

    if r.noise_variance > 0:
        nrng = np.random.default_rng(noise_ss)
        sigma = np.float32(math.sqrt(r.noise_variance / 2))
        block = 1 << 20
        for chan in (ref, sw):
            for a in range(0, n_total, block):
                b = min(n_total, a + block)
                noise = nrng.standard_normal((b - a, 2), dtype=np.float32) * sigma
                chan[a:b] += noise.view(np.complex64)[:, 0]
    if r.interchain_phase_offset_rad:
        sw *= np.complex64(np.exp(1j * r.interchain_phase_offset_rad))

    packets.sort(key=lambda p: (p.start_sample, p.emitter))
    cap = IQCapture(ref, sw, fs, r.center_freq_hz, float(r.f_refclk_hz), r.trigger_sample, plan, geom)
    return cap, GroundTruth(packets, ports, scene)


# ---------------------------------------------------------------- presets

SWEEP_ANGLES = tuple(range(-60, 61, 10))
SWITCH_TIMES_US = (3.125, 6.25, 12.5, 25.0)
_K_FOR_TSW = {3.125: (1, 16), 6.25: (2, 8), 12.5: (4, 4), 25.0: (8, 2)}


def _sweep_scene(angle: float, n_packets: int = 500, seed: int = 0) -> Scene:
    # period is deliberately not a multiple of the switch cycle so packets
    # start at every cycle phase
    e = Emitter(5e6, 5e6, "multitone", 100e-6, 250.1e-6, 20e-6, float(angle), 20.0,
                n_packets=n_packets, name=f"sweep{angle:+d}")
    dur = e.first_start_s + n_packets * e.period_s + 50e-6
    radio = RadioConfig(duration_s=dur, interchain_phase_offset_rad=0.7)
    return Scene((e,), radio, ArrayConfig(8, 0.0625, reference_position_m=-0.0625),
                 seed=1000 + int(angle) + seed, name=f"aoa_sweep/{angle:+d}")


def _antenna_count_scene(angle: float, n_packets: int = 150) -> Scene:
    # indoor-like multipath: two delayed rays at -4.4 and -8 dB from random directions
    rays = (Ray(3, 0.6, None, True), Ray(7, 0.4, None, True))
    e = Emitter(5e6, 5e6, "multitone", 100e-6, 250.1e-6, 20e-6, float(angle), 20.0, rays,
                n_packets=n_packets, name=f"mp{angle:+d}")
    dur = e.first_start_s + n_packets * e.period_s + 50e-6
    return Scene((e,), RadioConfig(duration_s=dur, interchain_phase_offset_rad=-1.1),
                 ArrayConfig(8, 0.0625), seed=2000 + int(angle), name=f"antenna_count/{angle:+d}")


def _switch_time_scene(t_sw_us: float, n_packets: int = 120) -> Scene:
    k, p = _K_FOR_TSW[t_sw_us]
    e = Emitter(5e6, 5e6, "multitone", 400e-6, 1000.3e-6, 30e-6, 17.0, 0.0,
                n_packets=n_packets, name="tsw")
    dur = e.first_start_s + n_packets * e.period_s
    return Scene((e,), RadioConfig(duration_s=dur, interchain_phase_offset_rad=0.4),
                 ArrayConfig(8, 0.0625), k=k, p=p, seed=3000,
                 name=f"switch_time/{t_sw_us:g}us")


def _multi_device_scene() -> Scene:
    ems = (
        Emitter(-9e6, 4e6, "multitone", 200e-6, 1.0e-3, 0.1e-3, -51.0, 15.0, name="dev_a"),
        Emitter(1e6, 2e6, "noise-burst", 120e-6, 0.7e-3, 0.35e-3, -19.0, 15.0, name="dev_b"),
        Emitter(10e6, 5e6, "multitone", 300e-6, 1.3e-3, 0.6e-3, 34.0, 15.0, name="dev_c"),
    )
    return Scene(ems, RadioConfig(duration_s=0.1, interchain_phase_offset_rad=2.0),
                 ArrayConfig(8, 0.0625, reference_position_m=0.5), seed=4000, name="multi_device")


def _short_packet_scene(packet_us: float, n_packets: int = 100) -> Scene:
    # starts on dwell boundaries: 6.25 us dwells, period 80 dwells
    dwell = 6.25e-6
    e = Emitter(-4e6, 5e6, "multitone", packet_us * 1e-6, 80 * dwell, 8 * dwell, 25.0, 20.0,
                n_packets=n_packets, name=f"short{packet_us:g}")
    dur = e.first_start_s + n_packets * e.period_s
    return Scene((e,), RadioConfig(duration_s=dur, interchain_phase_offset_rad=0.9),
                 ArrayConfig(8, 0.0625), seed=5000 + int(packet_us),
                 name=f"short_packets/{packet_us:g}us")


def preset_scenarios() -> dict:
    """Named presets: ``aoa_sweep/<deg>``, ``antenna_count/<deg>``,
    ``switch_time/<t>us``, ``multi_device`` and ``short_packets/<t>us``."""
    out = {}
    for a in SWEEP_ANGLES:
        s = _sweep_scene(a)
        out[s.name] = s
    for a in range(-60, 61, 20):
        s = _antenna_count_scene(a)
        out[s.name] = s
    for t in SWITCH_TIMES_US:
        s = _switch_time_scene(t)
        out[s.name] = s
    out["multi_device"] = _multi_device_scene()
    for t in (50.0, 25.0):
        s = _short_packet_scene(t)
        out[s.name] = s
    return out


def preset_family(prefix: str) -> list:
    return [s for name, s in preset_scenarios().items() if name.split("/")[0] == prefix]


def get_scene(name_or_path) -> Scene:
    """Preset by name, or a scene file path."""
    presets = preset_scenarios()
    if str(name_or_path) in presets:
        return presets[str(name_or_path)]
    path = Path(name_or_path)
    if not path.exists():
        raise SceneError(f"no preset or scene file named {name_or_path!r}")
    return load_scene(path)


def with_overrides(scene: Scene, **kw) -> Scene:
    """Copy of ``scene`` with top-level or radio fields replaced."""
    radio_kw = {k: kw.pop(k) for k in list(kw) if k in RadioConfig.__dataclass_fields__}
    if radio_kw:
        kw["radio"] = replace(scene.radio, **radio_kw)
    return replace(scene, **kw)
