"""Quantitative evaluation and disentanglement probes.

Image metrics (PSNR, SSIM, Fréchet distance, perceptual distance) work on
[0,1] float arrays. Distribution- and perceptual-level metrics take their
features from pluggable embedders so the math is testable offline; no
pretrained weights ship with the package.

Disentanglement probes: a small fixed-recipe classifier that tries to
read the domain off a latent (style codes should expose it, content maps
should not), a collinearity statistic for style codes along a density
sweep, and the interpolation-equivariance residual of the style encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.signal import convolve2d

from .networks import Models, StyleEncoder


# ---------------------------------------------------------------------------
# Pixel metrics
# ---------------------------------------------------------------------------

def _check_aligned(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) for [0,1] images; identical inputs give +inf."""
    a, b = _check_aligned(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, k1: float = 0.01,
         k2: float = 0.03, sigma: float = 1.5) -> float:
    """Mean local SSIM over all full Gaussian windows, channel-averaged.

    Weighted (biased) local moments, dynamic range 1.
    """
    a, b = _check_aligned(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[0], a.shape[1]) < window:
        raise ValueError(f"image {a.shape[:2]} smaller than window {window}")
    kern = gaussian_window(window, sigma)
    c1, c2 = k1 ** 2, k2 ** 2
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mu_x = convolve2d(x, kern, mode="valid")
        mu_y = convolve2d(y, kern, mode="valid")
        sig_x = convolve2d(x * x, kern, mode="valid") - mu_x ** 2
        sig_y = convolve2d(y * y, kern, mode="valid") - mu_y ** 2
        sig_xy = convolve2d(x * y, kern, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sig_xy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (sig_x + sig_y + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Fréchet distance
# ---------------------------------------------------------------------------

def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, eigenvalues
    floored at zero."""
    sym = (m + m.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """||mu_a-mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) over two feature
    sets (rows = samples), sample covariance with ddof=1."""
    feats_a = np.atleast_2d(np.asarray(feats_a, dtype=np.float64))
    feats_b = np.atleast_2d(np.asarray(feats_b, dtype=np.float64))
    if feats_a.shape[1] != feats_b.shape[1]:
        raise ValueError(f"feature dims differ: {feats_a.shape[1]} vs {feats_b.shape[1]}")
    if feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise ValueError("need at least 2 samples per set")
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(feats_a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(feats_b, rowvar=False))
    root_a = _sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    cross_eigs = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2.0), 0.0, None)
    d2 = (float(np.sum((mu_a - mu_b) ** 2))
          + float(np.trace(cov_a) + np.trace(cov_b))
          - 2.0 * float(np.sum(np.sqrt(cross_eigs))))
    return max(d2, 0.0)


# ---------------------------------------------------------------------------
# Embedders and perceptual distance
# ---------------------------------------------------------------------------

class PixelFlattenEmbedder:
    """Identity embedder: one stage, the flattened image."""

    name = "pixel-flatten"

    def stages(self, img: np.ndarray) -> list[np.ndarray]:
        return [np.asarray(img, dtype=np.float64).ravel()]

    def embed(self, img: np.ndarray) -> np.ndarray:
        return self.stages(img)[0]


class RandomConvEmbedder:
    """Frozen random conv stack; three stages of channel-pooled features.

    Seeded and deterministic: stage lengths (16, 32, 64) regardless of the
    input resolution.
    """

    name = "random-conv-frozen"

    def __init__(self, seed: int = 0):
        gen = torch.Generator().manual_seed(0xC0FFEE + seed)
        self.convs = []
        cin = 3
        for cout in (16, 32, 64):
            w = torch.empty(cout, cin, 3, 3)
            torch.nn.init.kaiming_normal_(w, generator=gen)
            self.convs.append(w)
            cin = cout

    def stages(self, img: np.ndarray) -> list[np.ndarray]:
        img = np.asarray(img, dtype=np.float32)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        x = torch.from_numpy(img.transpose(2, 0, 1))[None]
        out = []
        with torch.no_grad():
            for w in self.convs:
                x = torch.relu(torch.nn.functional.conv2d(x, w, stride=2, padding=1))
                out.append(x.mean(dim=(2, 3)).numpy().ravel().astype(np.float64))
        return out

    def embed(self, img: np.ndarray) -> np.ndarray:
        return np.concatenate(self.stages(img))


_EMBEDDERS = {
    PixelFlattenEmbedder.name: PixelFlattenEmbedder,
    RandomConvEmbedder.name: RandomConvEmbedder,
}


def get_embedder(name: str, **kwargs):
    if name not in _EMBEDDERS:
        raise KeyError(f"unknown embedder {name!r}; "
                       f"available: {sorted(_EMBEDDERS)}")
    return _EMBEDDERS[name](**kwargs)


def register_embedder(cls) -> None:
    """Attach an external embedder class (must expose .name and .stages)."""
    _EMBEDDERS[cls.name] = cls


def perceptual_distance(a: np.ndarray, b: np.ndarray, embedder,
                        layer_weights=None) -> float:
    """Weighted sum over stages of the RMS feature distance
    sqrt(mean((f_l(a)-f_l(b))^2)). With pixel-flatten and unit weight this
    is the RMS pixel distance."""
    stages_a = embedder.stages(a)
    stages_b = embedder.stages(b)
    if layer_weights is None:
        layer_weights = [1.0] * len(stages_a)
    if len(layer_weights) != len(stages_a):
        raise ValueError("one weight per embedder stage required")
    total = 0.0
    for w, fa, fb in zip(layer_weights, stages_a, stages_b):
        total += w * math.sqrt(float(np.mean((fa - fb) ** 2)))
    return total


def diversity_score(images: list[np.ndarray], embedder, n_pairs: int = 100,
                    seed: int = 0) -> float:
    """Mean perceptual distance over randomly sampled image pairs."""
    if len(images) < 2:
        raise ValueError("need at least 2 images")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_pairs):
        i, j = rng.choice(len(images), size=2, replace=False)
        total += perceptual_distance(images[i], images[j], embedder)
    return total / n_pairs


# ---------------------------------------------------------------------------
# Disentanglement probes
# ---------------------------------------------------------------------------

@dataclass
class ProbeDataset:
    """Latent vectors with binary domain labels, split train/test."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    def __post_init__(self):
        for x, y in ((self.train_x, self.train_y), (self.test_x, self.test_y)):
            if len(x) != len(y):
                raise ValueError("features and labels disagree in length")
            classes, counts = np.unique(y, return_counts=True)
            if len(classes) < 2:
                raise ValueError("probe data must contain both classes")
            if abs(counts[0] - counts[1]) > 0.1 * len(y):
                raise ValueError("probe classes unbalanced beyond 10%")


def latent_domain_probe(probe_data: ProbeDataset, epochs: int = 200,
                        hidden: int = 64, lr: float = 1e-3, seed: int = 0
                        ) -> tuple[float, float]:
    """Train the fixed 2-layer classifier to saturation; returns
    (train accuracy, test accuracy)."""
    gen = torch.Generator().manual_seed(seed)
    mean = probe_data.train_x.mean(axis=0)
    std = probe_data.train_x.std(axis=0) + 1e-8
    tx = torch.from_numpy(((probe_data.train_x - mean) / std)).float()
    ty = torch.from_numpy(probe_data.train_y.astype(np.int64))
    vx = torch.from_numpy(((probe_data.test_x - mean) / std)).float()
    vy = torch.from_numpy(probe_data.test_y.astype(np.int64))

    dim = tx.shape[1]
    w1 = torch.empty(dim, hidden)
    torch.nn.init.kaiming_normal_(w1, generator=gen)
    w2 = torch.empty(hidden, 2)
    torch.nn.init.kaiming_normal_(w2, generator=gen)
    w1, w2 = w1.requires_grad_(), w2.requires_grad_()
    b1 = torch.zeros(hidden, requires_grad=True)
    b2 = torch.zeros(2, requires_grad=True)
    opt = torch.optim.Adam([w1, b1, w2, b2], lr=lr)

    def forward(x):
        return torch.relu(x @ w1 + b1) @ w2 + b2

    for _ in range(epochs):
        opt.zero_grad()
        loss = torch.nn.functional.cross_entropy(forward(tx), ty)
        loss.backward()
        opt.step()
    with torch.no_grad():
        train_acc = float((forward(tx).argmax(1) == ty).float().mean())
        test_acc = float((forward(vx).argmax(1) == vy).float().mean())
    return train_acc, test_acc


def collinearity(codes) -> float:
    """1 - (variance explained by the first principal axis) of a set of
    style codes; 0 means the codes lie exactly on a line."""
    mat = np.asarray([np.asarray(c, dtype=np.float64).ravel() for c in codes])
    if mat.shape[0] < 3:
        raise ValueError("need at least 3 codes")
    centered = mat - mat.mean(axis=0)
    sing = np.linalg.svd(centered, compute_uv=False)
    total = float(np.sum(sing ** 2))
    if total == 0.0:
        return 0.0
    return float(1.0 - sing[0] ** 2 / total)


@torch.no_grad()
def equivariance_residual(x_i: torch.Tensor, x_j: torch.Tensor, k: float,
                          style_encoder: StyleEncoder) -> float:
    """Mean |E^s(k x_i + (1-k) x_j) - (k E^s(x_i) + (1-k) E^s(x_j))| per
    style coordinate; zero for an interpolation-equivariant encoder."""
    if not (0.0 <= k <= 1.0):
        raise ValueError(f"k must be in [0,1], got {k}")
    if x_i.shape != x_j.shape:
        raise ValueError(f"shape mismatch: {tuple(x_i.shape)} vs {tuple(x_j.shape)}")
    style_encoder.eval()
    xi = x_i if x_i.dim() == 4 else x_i.unsqueeze(0)
    xj = x_j if x_j.dim() == 4 else x_j.unsqueeze(0)
    blended = k * xi + (1.0 - k) * xj
    s_blend = style_encoder(blended)
    s_mix = k * style_encoder(xi) + (1.0 - k) * style_encoder(xj)
    return float((s_blend - s_mix).abs().mean())


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-D sequences")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    dx, dy = x - x.mean(), y - y.mean()
    vx, vy = float(np.sum(dx * dx)), float(np.sum(dy * dy))
    if vx == 0.0 or vy == 0.0:
        raise ValueError("zero variance input")
    return float(np.sum(dx * dy) / math.sqrt(vx * vy))


# ---------------------------------------------------------------------------
# Probe dataset construction from a trained model
# ---------------------------------------------------------------------------

@torch.no_grad()
def _encode_split(manifest, models: Models, split: str, crop: int):
    from .data_pipeline import Loader, PipelineConfig
    loader = Loader(manifest, PipelineConfig(crop_size=crop, batch_size=8),
                    split, train=False)
    styles, contents, images, labels = [], [], [], []
    models.eval()
    for batch in loader:
        for x, label in ((batch.x_i, 0), (batch.x_j, 1)):  # 0=haze, 1=clear
            styles.append(models.style_encoder(x).numpy())
            contents.append(models.content_encoder(x).mean(dim=(2, 3)).numpy())
            images.append(x.flatten(1).numpy())
            labels.append(np.full(x.shape[0], label))
    return (np.concatenate(styles), np.concatenate(contents),
            np.concatenate(images), np.concatenate(labels))


def build_probe_datasets(manifest, models: Models, crop: int = 64
                         ) -> dict[str, ProbeDataset]:
    """Style / content / raw-image probe datasets from a corpus: every
    scene contributes its haze and haze-free renderings, so classes are
    balanced; train and test latents come from the manifest splits."""
    s_tr, c_tr, i_tr, y_tr = _encode_split(manifest, models, "train", crop)
    s_te, c_te, i_te, y_te = _encode_split(manifest, models, "test", crop)
    return {
        "style": ProbeDataset(s_tr, y_tr, s_te, y_te),
        "content": ProbeDataset(c_tr, y_tr, c_te, y_te),
        "image": ProbeDataset(i_tr, y_tr, i_te, y_te),
    }
