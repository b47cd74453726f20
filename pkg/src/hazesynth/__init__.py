"""Density-aware haze image synthesis by content-style disentanglement."""

__version__ = "0.1.0"

from .scene_synth import (SceneSpec, ScatterParams, CorpusParams, Manifest,
                          transmittance, apply_haze, generate_scene,
                          build_corpus)
from .data_pipeline import PipelineConfig, Batch, make_loader
from .networks import NetSpec, Models, build_models
from .objectives import LossWeights, LossReport, InterpolationDraw
from .trainer import TrainConfig, Trainer, learning_rate
from .density_control import DensityRequest, synthesize_density, sweep
from .config import RunConfig, get_preset, load_config, save_config

__all__ = [
    "SceneSpec", "ScatterParams", "CorpusParams", "Manifest",
    "transmittance", "apply_haze", "generate_scene", "build_corpus",
    "PipelineConfig", "Batch", "make_loader",
    "NetSpec", "Models", "build_models",
    "LossWeights", "LossReport", "InterpolationDraw",
    "TrainConfig", "Trainer", "learning_rate",
    "DensityRequest", "synthesize_density", "sweep",
    "RunConfig", "get_preset", "load_config", "save_config",
]
