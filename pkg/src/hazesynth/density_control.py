"""Density-aware inference: synthesize haze of a requested density alpha
by mixing the haze-free image's style code toward a baseline haze style.

alpha = 0 reproduces the haze-free input's self-reconstruction style;
alpha = 1 uses the reference haze style unchanged. The reference is any
haze image; at desk scale the corpus's unit-scattering rendering of the
same scene serves as the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .networks import Models
from .objectives import interpolate_style


@dataclass
class DensityRequest:
    alpha: float
    source: torch.Tensor     # haze-free image batch, working range
    reference: torch.Tensor  # baseline haze image batch, working range

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")


@dataclass
class SweepResult:
    images: list[torch.Tensor]           # one synthesis per alpha
    interpolated_codes: list[torch.Tensor]  # style fed to the generator
    reencoded_codes: list[torch.Tensor]     # style of the synthesized image


def _as_batch(x: torch.Tensor) -> torch.Tensor:
    return x if x.dim() == 4 else x.unsqueeze(0)


@torch.no_grad()
def synthesize_density(req: DensityRequest, models: Models) -> torch.Tensor:
    """x_alpha = G(E^c(source), alpha*E^s(reference) + (1-alpha)*E^s(source))."""
    models.eval()
    x_j = _as_batch(req.source)
    x_i = _as_batch(req.reference)
    c_j = models.content_encoder(x_j)
    s_j = models.style_encoder(x_j)
    s_i = models.style_encoder(x_i)
    s_a = interpolate_style(s_i, s_j, req.alpha)
    return models.generator(c_j, s_a)


@torch.no_grad()
def sweep(x_j: torch.Tensor, x_i: torch.Tensor, alphas, models: Models
          ) -> SweepResult:
    """Synthesize one image per alpha and collect both the interpolated and
    the re-encoded style codes (probe input for the collinearity check)."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alphas must be non-empty")
    if any(not (0.0 <= a <= 1.0) for a in alphas):
        raise ValueError("alphas must lie in [0,1]")
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be sorted ascending")
    models.eval()
    x_j = _as_batch(x_j)
    x_i = _as_batch(x_i)
    c_j = models.content_encoder(x_j)
    s_j = models.style_encoder(x_j)
    s_i = models.style_encoder(x_i)
    images, interp, reenc = [], [], []
    for a in alphas:
        s_a = interpolate_style(s_i, s_j, a)
        img = models.generator(c_j, s_a)
        images.append(img)
        interp.append(s_a)
        reenc.append(models.style_encoder(img))
    return SweepResult(images=images, interpolated_codes=interp,
                       reencoded_codes=reenc)


def strip_image(images: list[torch.Tensor]) -> np.ndarray:
    """Tile a sweep horizontally into one Hx(n*W)x3 array in [0,1]."""
    rows = []
    for img in images:
        arr = img.detach().cpu().numpy()
        if arr.ndim == 4:
            arr = arr[0]
        rows.append(np.clip((arr.transpose(1, 2, 0) + 1.0) / 2.0, 0.0, 1.0))
    return np.concatenate(rows, axis=1)
