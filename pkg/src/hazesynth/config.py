"""Run configuration: one serializable bundle of corpus, pipeline,
network, loss-weight and trainer settings.

A stored config re-runs identically: every seed lives in the file. The
on-disk format is a small TOML document with one table per subsystem.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data_pipeline import PipelineConfig
from .networks import NetSpec
from .objectives import LossWeights
from .scene_synth import CorpusParams
from .trainer import TrainConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class CorpusConfig:
    n_scenes: int = 200
    width: int = 64
    height: int = 64
    element_min: int = 3
    element_max: int = 7
    a_min: float = 0.8
    a_max: float = 1.0
    beta: float = 1.0
    seed: int = 0

    def params(self) -> CorpusParams:
        return CorpusParams(a_range=(self.a_min, self.a_max), beta=self.beta,
                            seed=self.seed)


@dataclass(frozen=True)
class RunConfig:
    preset: str = "desk"
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    network: NetSpec = field(default_factory=NetSpec)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    least_squares: bool = False


PRESETS = {
    # CPU-scale: 64x64 crops, quarter-width networks, short schedule.
    "desk": RunConfig(
        preset="desk",
        corpus=CorpusConfig(n_scenes=200, width=64, height=64),
        pipeline=PipelineConfig(crop_size=64, batch_size=4),
        network=NetSpec(width_mult=0.25),
        train=TrainConfig(total_iters=3000, checkpoint_every=1000),
    ),
    # Full-scale settings; needs GPU-class hardware.
    "paper": RunConfig(
        preset="paper",
        corpus=CorpusConfig(n_scenes=2000, width=320, height=320),
        pipeline=PipelineConfig(crop_size=256, batch_size=4),
        network=NetSpec(width_mult=1.0),
        train=TrainConfig(total_iters=200_000, checkpoint_every=10_000),
    ),
}


def get_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name]


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return format(v, ".17g") if isinstance(v, float) else str(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def save_config(config: RunConfig, path: str | Path) -> None:
    lines = [f"version = {CONFIG_VERSION}",
             f"preset = {_format_value(config.preset)}",
             f"least_squares = {_format_value(config.least_squares)}"]
    for section in ("corpus", "pipeline", "network", "weights", "train"):
        lines.append(f"\n[{section}]")
        for f in dataclasses.fields(getattr(config, section)):
            val = getattr(getattr(config, section), f.name)
            lines.append(f"{f.name} = {_format_value(val)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path: str | Path) -> RunConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    version = data.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"config version {version} unsupported")
    return RunConfig(
        preset=data.get("preset", "desk"),
        least_squares=data.get("least_squares", False),
        corpus=CorpusConfig(**data.get("corpus", {})),
        pipeline=PipelineConfig(**data.get("pipeline", {})),
        network=NetSpec(**data.get("network", {})),
        weights=LossWeights(**data.get("weights", {})),
        train=TrainConfig(**data.get("train", {})),
    )


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Rebuild a RunConfig with dotted-name overrides, e.g.
    apply_overrides(cfg, **{"train.seed": 7, "network.width_mult": 0.5})."""
    parts = {s: dict() for s in ("corpus", "pipeline", "network", "weights", "train")}
    top = {}
    for key, val in overrides.items():
        if val is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            parts[section][name] = val
        else:
            top[key] = val
    return dataclasses.replace(
        config,
        corpus=dataclasses.replace(config.corpus, **parts["corpus"]),
        pipeline=dataclasses.replace(config.pipeline, **parts["pipeline"]),
        network=dataclasses.replace(config.network, **parts["network"]),
        weights=dataclasses.replace(config.weights, **parts["weights"]),
        train=dataclasses.replace(config.train, **parts["train"]),
        **top,
    )
