"""Hyperspectral unmixing and threshold classification of peanut pod maturity."""

__version__ = "0.1.0"

from ._accel import BACKEND
from .cube import (CalibrationRefs, HyperCube, Spectrum, WavelengthAxis, calibrate,
                   crop_bands, load_cube, save_cube, savgol_smooth)
from .maturity import (ConfusionCounts, Metrics, RegionConfidence, TrainedModel,
                       aggregate_confidence, classify, compute_metrics, load_model,
                       save_model, train_threshold)
from .pipeline import PipelineConfig, Scene, classify_regions, train_model
from .segmentation import RegionSet, RgbImage, extract_rgb, kmeans2, segment_regions
from .synthgen import SceneSpec, make_endmembers, make_scene
from .unmixing import (EndmemberSet, LabeledRegionSpectra, ProportionMap,
                       estimate_endmembers, unmix_pixel, unmix_regions)

__all__ = [
    "BACKEND", "CalibrationRefs", "HyperCube", "Spectrum", "WavelengthAxis", "calibrate",
    "crop_bands", "load_cube", "save_cube", "savgol_smooth", "ConfusionCounts", "Metrics",
    "RegionConfidence", "TrainedModel", "aggregate_confidence", "classify",
    "compute_metrics", "load_model", "save_model", "train_threshold", "PipelineConfig",
    "Scene", "classify_regions", "train_model", "RegionSet", "RgbImage", "extract_rgb",
    "kmeans2", "segment_regions", "SceneSpec", "make_endmembers", "make_scene",
    "EndmemberSet", "LabeledRegionSpectra", "ProportionMap", "estimate_endmembers",
    "unmix_pixel", "unmix_regions",
]
