"""Region-of-interest prioritised sampling for simulated single-pixel cameras."""

import json

from . import _core
from ._core import (
    BoundsError,
    BudgetError,
    CapacityError,
    ConfigError,
    DimensionError,
    Error,
    IoError,
    NumericalError,
    dct2d,
    dwt2d,
    idct2d,
    idwt2d,
    ingest_scene,
    iwalsh2d,
    mask_measure,
    nmse,
    read_image,
    ssim,
    walsh2d,
    write_pgm,
    bound_sweep,
)

__all__ = [
    "BoundsError", "BudgetError", "CapacityError", "ConfigError", "DimensionError", "Error",
    "IoError", "NumericalError", "bound_sweep", "dct2d", "design_sampling_map", "detect_rois",
    "dwt2d", "idct2d", "idwt2d", "ingest_scene", "iwalsh2d", "mask_measure", "nmse",
    "read_image", "rps_run", "run_pipeline", "scene_metrics", "ssim", "walsh2d", "write_pgm",
]


def _decode(result):
    for key in ("log", "ledger", "metrics"):
        result[key] = json.loads(result[key])
    return result


def design_sampling_map(side, budget, seed=1):
    return json.loads(_core.design_sampling_map(side, budget, seed))


def detect_rois(lowres, params=None):
    return json.loads(_core.detect_rois(lowres, json.dumps(params) if params else ""))


def rps_run(scene, config=None):
    """Runs the prioritisation loop on a 2-D scene; config uses the run-config keys."""
    return _decode(_core.rps_run(scene, json.dumps(config) if config else ""))


def run_pipeline(config):
    """Ingests config["input"], runs and writes every artifact."""
    return _decode(_core.run_pipeline(json.dumps(config)))


def scene_metrics(estimate, truth, rois=None):
    return json.loads(_core.scene_metrics(estimate, truth, json.dumps(rois) if rois else ""))
