"""Spectrum separation and angle-of-arrival estimation for switched antenna arrays."""

from .errors import *  # noqa: F401,F403
from .iqcore import ArrayGeometry, IQCapture, Spectrogram, istft_full, istft_partial, make_window, psd, stft_forward
from .ssfp import SwitchPlan, antenna_at, invert_box, partial_size, switch_time
from .searchlite import (DetectionBox, DetectorConfig, NoiseFloor, StreamingDetector, detect,
                         estimate_noise_floor, excise_submatrices, extract_boxes, morphology_clean,
                         threshold_mask)
from .aoa import estimate_box_aoa, mle_scan, relative_phases
from .simulator import Emitter, Scene, get_scene, load_scene, preset_scenarios, synthesize
from .pipeline import Pipeline, PipelineConfig, run_pipeline

__version__ = "0.1.0"
