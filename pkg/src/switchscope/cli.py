"""Command line: ``switchscope simulate | pipeline | render | presets``.

Every option may also come from a ``SWITCHSCOPE_<NAME>`` environment variable
or a YAML/JSON ``--config`` file keyed by the option name (dashes or
underscores).  Precedence: flag, then environment, then config file, then the
built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import yaml

from . import capture as capfile
from .errors import SwitchscopeError
from .iqcore import psd
from .pipeline import DEFAULT_CHUNK_HOPS, Pipeline, PipelineConfig
from .render import render
from .searchlite import DetectorConfig, FloorEstimationError
from .simulator import get_scene, preset_scenarios, synthesize, with_overrides
from .ssfp import SwitchPlan

log = logging.getLogger("switchscope")

ENV_PREFIX = "SWITCHSCOPE_"
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable
    default: Any
    help: str
    commands: tuple


_ALL = ("simulate", "pipeline", "render")
_PROC = ("pipeline", "render")
OPTIONS = (
    Option("scene", str, None, "preset name or scene file", ("simulate",)),
    Option("in", str, None, "capture data file", _PROC),
    Option("out", str, None, "output path ('-' for stdout annotations)", _ALL),
    Option("nfft", int, None, "STFT size; sets p = nfft / samples-per-switch", _PROC),
    Option("p", int, None, "STFT frames per switch dwell ratio (nfft = p * T_SW * F_S)", _ALL),
    Option("k", int, None, "switch period in multiples of 1/gcd(F_REFCLK, F_S)", _ALL),
    Option("tsw-us", float, None, "switch time in microseconds (alternative to --k)", _ALL),
    Option("delta-db", float, 10.0, "detection threshold above the noise floor", _PROC),
    Option("ensemble", int, 16, "PSD frames per averaged block", _PROC),
    Option("min-area", int, 5, "smallest box in pixels", _PROC),
    Option("grid-step-deg", float, 0.1, "AoA scan resolution", ("pipeline",)),
    Option("blank-samples", int, None, "full-rate samples dropped after each switch", _ALL),
    Option("seed", int, None, "override the scene RNG seed", ("simulate",)),
    Option("duration-s", float, None, "override the scene duration", ("simulate",)),
    Option("chunk-hops", int, DEFAULT_CHUNK_HOPS, "STFT hops per processing chunk", _PROC),
    Option("render-floor-db", float, -10.0, "dB mapped to black", ("render",)),
    Option("render-ceil-db", float, 40.0, "dB mapped to white", ("render",)),
    Option("render-decimate", int, 1, "merge this many frames per image column (max hold)", ("render",)),
)


def _dest(name: str) -> str:
    return name.replace("-", "_")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="switchscope", description="Spectrum separation and AoA from switched-array captures.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cmds = {
        "simulate": sub.add_parser("simulate", help="synthesize a capture from a scene"),
        "pipeline": sub.add_parser("pipeline", help="detect, separate and estimate AoA"),
        "render": sub.add_parser("render", help="spectrogram image with detection boxes"),
    }
    sub.add_parser("presets", help="list built-in scenes")
    for cmd, p in cmds.items():
        p.add_argument("--config", default=None, help="YAML/JSON file of option defaults")
        for opt in OPTIONS:
            if cmd in opt.commands:
                default = "" if opt.default is None else f" (default {opt.default})"
                p.add_argument(f"--{opt.name}", dest=_dest(opt.name), type=opt.type, default=None,
                               help=opt.help + default)
    return parser


def resolve_options(args: argparse.Namespace, environ=None) -> dict:
    """Merge flag, environment, config file and default values."""
    environ = os.environ if environ is None else environ
    config = {}
    if getattr(args, "config", None):
        loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(loaded, dict):
            raise UsageError(f"{args.config}: config must be a mapping")
        config = {_dest(str(k)): v for k, v in loaded.items()}
    out = {}
    for opt in OPTIONS:
        if args.command not in opt.commands:
            continue
        key = _dest(opt.name)
        val = getattr(args, key, None)
        if val is None:
            env = environ.get(ENV_PREFIX + key.upper())
            if env is not None:
                val = env
            elif key in config:
                val = config[key]
        if val is not None:
            try:
                val = opt.type(val)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"--{opt.name}: invalid value {val!r}") from exc
        out[key] = opt.default if val is None else val
    return out


def _plan_with_overrides(plan: SwitchPlan, o: dict) -> SwitchPlan:
    k, p, blank = plan.k, plan.p, plan.blank_samples
    if o.get("tsw_us") is not None:
        k = SwitchPlan.from_switch_time(plan.f_refclk_hz, plan.f_s_hz, o["tsw_us"] * 1e-6, 2,
                                        plan.n_antennas).k
    if o.get("k") is not None:
        k = o["k"]
    if o.get("p") is not None:
        p = o["p"]
    if o.get("blank_samples") is not None:
        blank = o["blank_samples"]
    if o.get("nfft") is not None:
        return SwitchPlan.for_nfft(plan.f_refclk_hz, plan.f_s_hz, k, o["nfft"], plan.n_antennas, blank)
    return SwitchPlan(plan.f_refclk_hz, plan.f_s_hz, k, p, plan.n_antennas, blank)


def _require(o: dict, key: str):
    if not o.get(key):
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return o[key]


def cmd_simulate(o: dict) -> int:
    scene = get_scene(_require(o, "scene"))
    out = Path(_require(o, "out"))
    kw = {}
    if o["seed"] is not None:
        kw["seed"] = o["seed"]
    if o["duration_s"] is not None:
        kw["duration_s"] = o["duration_s"]
    plan = _plan_with_overrides(scene.plan, o)
    kw.update(k=plan.k, p=plan.p, blank_samples=plan.blank_samples)
    scene = with_overrides(scene, **kw).validate()
    cap, truth = synthesize(scene)
    capfile.write_capture(out, cap, seed=scene.seed)
    capfile.truth_path(out).write_text(json.dumps(truth.to_dict(), indent=1, default=float) + "\n")
    np.save(capfile.ports_path(out), truth.port_log)
    log.info("wrote %d samples (%d packets) to %s", len(cap), len(truth.packets), out)
    return EXIT_OK


def _pipeline_for(o: dict, estimate_aoa: bool) -> Pipeline:
    cap = capfile.read_capture(_require(o, "in"))
    if cap.plan is None:
        raise SwitchscopeError("capture sidecar has no switch plan")
    plan = _plan_with_overrides(cap.plan, o)
    det = DetectorConfig(delta_db=o["delta_db"], ensemble=o["ensemble"], min_area=o["min_area"])
    cfg = PipelineConfig(detector=det, chunk_hops=o["chunk_hops"], estimate_aoa=estimate_aoa,
                         grid_step_deg=o.get("grid_step_deg", 0.1))
    return Pipeline(cap, cfg, plan)


def cmd_pipeline(o: dict) -> int:
    pipe = _pipeline_for(o, estimate_aoa=True)
    out = _require(o, "out")
    stream = sys.stdout if out == "-" else open(out, "w")
    n = 0
    try:
        for ann in pipe.run():
            stream.write(ann.to_json() + "\n")
            n += 1
    finally:
        if stream is not sys.stdout:
            stream.close()
    log.info("%d annotations", n)
    return EXIT_OK


def cmd_render(o: dict) -> int:
    pipe = _pipeline_for(o, estimate_aoa=False)
    dec = max(1, o["render_decimate"])
    cols = []
    H = max(dec, o["chunk_hops"] // dec * dec)
    for f0 in range(0, pipe.n_frames, H):
        f1 = min(pipe.n_frames, f0 + H)
        p = psd(pipe._frames(f0, f1, pipe.cap.ref_samples), pipe.nfft)
        n = len(p) // dec * dec
        if n:
            cols.append(p[:n].reshape(-1, dec, pipe.nfft).max(axis=1))
        if len(p) > n:
            cols.append(p[n:].max(axis=0, keepdims=True))
    frames = np.concatenate(cols) if cols else np.zeros((0, pipe.nfft))
    try:
        boxes = list(pipe.boxes())
    except FloorEstimationError as exc:
        log.warning("no boxes drawn: %s", exc)
        boxes = []
    if dec > 1:
        boxes = [dataclasses.replace(b, frame_start=b.frame_start // dec,
                                     frame_end=-(-b.frame_end // dec)) for b in boxes]
    render(frames, _require(o, "out"), o["render_floor_db"], o["render_ceil_db"], boxes)
    return EXIT_OK


def cmd_presets() -> int:
    for name, s in preset_scenarios().items():
        print(f"{name}\t{len(s.emitters)} emitter(s)\t{s.radio.duration_s:.4g} s")
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        if args.command == "presets":
            return cmd_presets()
        opts = resolve_options(args)
        return {"simulate": cmd_simulate, "pipeline": cmd_pipeline, "render": cmd_render}[args.command](opts)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SwitchscopeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
