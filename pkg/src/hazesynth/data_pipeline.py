"""Corpus loading: unpaired cross-domain batches with crops and the
[0,1] <-> [-1,1] working-range mapping owned by this module.

The loader is deterministic in (shuffle_seed, split, epoch): shuffles and
crop offsets are pure functions of those, so any batch can be recomputed
by index. Haze and haze-free samples are shuffled independently; pairing
inside a batch carries no scene correspondence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .scene_synth import Manifest, ManifestRecord
from . import imgio


class LoadError(RuntimeError):
    """Raised when a manifest entry cannot be read; names the sample id."""


def to_working(img: np.ndarray | torch.Tensor):
    """Map [0,1] image values to the model working range [-1,1]."""
    return img * 2.0 - 1.0


def from_working(img: np.ndarray | torch.Tensor):
    """Map working-range values back to [0,1]."""
    return (img + 1.0) / 2.0


@dataclass(frozen=True)
class PipelineConfig:
    crop_size: int = 64
    batch_size: int = 4
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.crop_size < 1:
            raise ValueError("crop_size must be >= 1")


@dataclass
class Batch:
    """One training batch: x_i from the haze domain, x_j haze-free, unpaired."""

    x_i: torch.Tensor
    x_j: torch.Tensor
    ids: list[tuple[str, str]]  # (haze sample id, clear sample id) per row


def _load_image(manifest: Manifest, rec: ManifestRecord, kind: str) -> np.ndarray:
    path = manifest.resolve(rec.haze_path if kind == "haze" else rec.clear_path)
    try:
        return imgio.read_png(path)
    except OSError as e:
        raise LoadError(f"sample {rec.sample_id}: cannot read {path}") from e


def _to_chw(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float()


class Loader:
    """Deterministic unpaired batch iterator over one manifest split.

    Train mode: independent per-domain shuffles and fresh random crops each
    epoch, last partial batch dropped. Test mode: manifest order, center
    crops. Iterating yields epoch 0; `batch_at(k)` gives global batch k
    (epoch k // batches_per_epoch), which is what resumable training uses.
    """

    def __init__(self, manifest: Manifest, config: PipelineConfig, split: str,
                 train: bool | None = None):
        self.manifest = manifest
        self.config = config
        self.split = split
        self.records = manifest.split(split)
        if not self.records:
            raise ValueError(f"split {split!r} is empty")
        self.train = split == "train" if train is None else train
        h, w = imgio.read_png(manifest.resolve(self.records[0].clear_path)).shape[:2]
        if config.crop_size > min(h, w):
            raise ValueError(
                f"crop_size {config.crop_size} exceeds image size {h}x{w}")

    @property
    def batches_per_epoch(self) -> int:
        n = len(self.records)
        if self.train:
            return n // self.config.batch_size  # drop_last
        return (n + self.config.batch_size - 1) // self.config.batch_size

    def _epoch_order(self, epoch: int, domain: str) -> np.ndarray:
        idx = np.arange(len(self.records))
        if not self.train:
            return idx
        salt = 0 if domain == "haze" else 1
        rng = np.random.default_rng((self.config.shuffle_seed, epoch, salt))
        rng.shuffle(idx)
        return idx

    def _crop(self, img: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
        c = self.config.crop_size
        h, w = img.shape[:2]
        if rng is None:  # center crop
            r0, c0 = (h - c) // 2, (w - c) // 2
        else:
            r0 = int(rng.integers(0, h - c + 1))
            c0 = int(rng.integers(0, w - c + 1))
        return img[r0:r0 + c, c0:c0 + c]

    def batch_at(self, global_batch: int) -> Batch:
        epoch, b = divmod(global_batch, self.batches_per_epoch)
        order_i = self._epoch_order(epoch, "haze")
        order_j = self._epoch_order(epoch, "clear")
        bs = self.config.batch_size
        rows_i, rows_j, ids = [], [], []
        for n, k in enumerate(range(b * bs, min((b + 1) * bs, len(self.records)))):
            rec_i = self.records[order_i[k]]
            rec_j = self.records[order_j[k]]
            crop_rng_i = crop_rng_j = None
            if self.train:
                crop_rng_i = np.random.default_rng(
                    (self.config.shuffle_seed, epoch, b * bs + n, 0))
                crop_rng_j = np.random.default_rng(
                    (self.config.shuffle_seed, epoch, b * bs + n, 1))
            img_i = self._crop(_load_image(self.manifest, rec_i, "haze"), crop_rng_i)
            img_j = self._crop(_load_image(self.manifest, rec_j, "clear"), crop_rng_j)
            rows_i.append(_to_chw(to_working(img_i)))
            rows_j.append(_to_chw(to_working(img_j)))
            ids.append((rec_i.sample_id, rec_j.sample_id))
        return Batch(x_i=torch.stack(rows_i), x_j=torch.stack(rows_j), ids=ids)

    def __iter__(self):
        for b in range(self.batches_per_epoch):
            yield self.batch_at(b)

    def __len__(self) -> int:
        return self.batches_per_epoch


def make_loader(manifest: Manifest, config: PipelineConfig, split: str) -> Loader:
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    return Loader(manifest, config, split)
