"""Procedural haze-free scenes with ground-truth depth, and the physics
renderer that turns them into haze images.

The haze renderer implements the atmospheric scattering model
    I = J * t + A * (1 - t),    t = exp(-beta * d)
where J is the clear image, d the per-pixel depth in meters, beta the
scattering coefficient and A the atmospheric light intensity.

Scenes are desk-scale stand-ins for road imagery: a sky band, a ground
plane whose depth ramps toward the horizon (clipped at the far range, so
the rows just under the horizon form a constant-depth plateau), a road
wedge painted on the ground, and a handful of flat-color rectangles
("vehicles") standing on the ground at distinct depths. Rectangles are
painted far-to-near so nearer ones overwrite farther ones in both color
and depth.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgio

SKY_FRACTION = 0.4  # horizon row = round(SKY_FRACTION * height)

MANIFEST_NAME = "manifest.tsv"
MANIFEST_VERSION = 1


class ValidationError(ValueError):
    """Raised when inputs violate a physics or scene precondition."""


# ---------------------------------------------------------------------------
# Atmospheric scattering
# ---------------------------------------------------------------------------

def _check_depth(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValidationError(f"depth must be HxW, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)):
        raise ValidationError("depth contains non-finite entries")
    if not np.all(depth > 0):
        raise ValidationError("depth contains non-positive entries")
    return depth


TINY = np.nextafter(0.0, 1.0)  # smallest positive float64


def transmittance(depth: np.ndarray, beta: float) -> np.ndarray:
    """Medium transmittance t = exp(-beta * d), elementwise over an HxW
    depth map. Floored at the smallest positive float so very deep pixels
    stay strictly positive instead of underflowing to zero."""
    depth = _check_depth(depth)
    if not np.isfinite(beta) or beta < 0:
        raise ValidationError(f"beta must be finite and >= 0, got {beta}")
    return np.maximum(np.exp(-beta * depth), TINY)


def apply_haze(clear: np.ndarray, t: np.ndarray, a: float) -> np.ndarray:
    """Composite haze over a clear image: I = J*t + A*(1-t).

    `t` is a single-channel map in (0, 1], broadcast over the color channels
    of `clear`. Values are expected in [0, 1]; float error up to 1e-6 outside
    that range is clipped, anything larger is an error.
    """
    clear = np.asarray(clear, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 2 or clear.shape[:2] != t.shape:
        raise ValidationError(
            f"clear {clear.shape} and t {t.shape} are not spatially aligned")
    if not (0.0 <= a <= 1.0):
        raise ValidationError(f"atmospheric light A must be in [0,1], got {a}")
    if not np.all((t > 0) & (t <= 1)):
        raise ValidationError("transmittance entries must lie in (0, 1]")
    tb = t if clear.ndim == 2 else t[..., None]
    hazy = clear * tb + a * (1.0 - tb)
    lo, hi = hazy.min(), hazy.max()
    if lo < -1e-6 or hi > 1 + 1e-6:
        raise ValidationError(f"haze output outside [0,1] beyond tolerance: [{lo}, {hi}]")
    return np.clip(hazy, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Procedural scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one procedural scene."""

    # Default depth range is tuned to unit scattering (beta = 1): the near
    # field keeps t ~ 0.7 while the far clip sits around t ~ 0.02.
    seed: int
    width: int = 64
    height: int = 64
    element_count: int = 5
    ground_plane_depth_range: tuple[float, float] = (0.35, 4.0)
    sky_depth_m: float = 1000.0

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValidationError("width and height must be >= 16")
        near, far = self.ground_plane_depth_range
        if not near < far:
            raise ValidationError("ground depth range must satisfy near < far")
        if self.sky_depth_m < far:
            raise ValidationError("sky depth must be >= far ground depth")
        if self.element_count < 0:
            raise ValidationError("element_count must be >= 0")


def ground_depth_profile(spec: SceneSpec) -> np.ndarray:
    """Per-row ground depth, index 0 = horizon row, last = bottom row.

    Perspective ramp near * n / (n - i) measured from the bottom row,
    clipped at the far range (the clip forms the horizon plateau).
    """
    near, far = spec.ground_plane_depth_range
    horizon = int(round(SKY_FRACTION * spec.height))
    n = spec.height - horizon
    i = np.arange(n - 1, -1, -1, dtype=np.float64)  # rows from bottom count
    return np.minimum(near * n / (n - i), far)


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Render one scene; returns (clear HxWx3 in [0,1], depth HxW in meters)."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    horizon = int(round(SKY_FRACTION * h))
    near, far = spec.ground_plane_depth_range

    color = np.zeros((h, w, 3), dtype=np.float64)
    depth = np.zeros((h, w), dtype=np.float64)

    # Sky band
    sky_rgb = np.array([0.55, 0.65, 0.85]) + rng.uniform(-0.08, 0.08, 3)
    color[:horizon] = sky_rgb
    depth[:horizon] = spec.sky_depth_m

    # Ground plane with perspective depth ramp
    ramp = ground_depth_profile(spec)
    depth[horizon:] = ramp[:, None]
    ground_rgb = np.array([0.34, 0.31, 0.26]) + rng.uniform(-0.06, 0.06, 3)
    shade = np.linspace(0.9, 1.1, h - horizon)[:, None, None]
    color[horizon:] = np.clip(ground_rgb * shade, 0.0, 1.0)

    # Road wedge: color-only, shares the ground depth ramp
    road_rgb = np.array([0.42, 0.42, 0.44]) + rng.uniform(-0.05, 0.05, 3)
    vanish_x = w * rng.uniform(0.35, 0.65)
    bottom_half = w * rng.uniform(0.18, 0.30)
    for r in range(horizon, h):
        frac = (r - horizon + 1) / (h - horizon)
        half = max(1.0, bottom_half * frac)
        c0 = int(np.clip(vanish_x - half, 0, w))
        c1 = int(np.clip(vanish_x + half, 0, w))
        color[r, c0:c1] = road_rgb

    # Elements: flat rectangles standing on the ground, one per width slot so
    # no element is ever fully occluded. Painted far to near.
    elements = []
    if spec.element_count:
        slot = w / spec.element_count
        for e in range(spec.element_count):
            d = rng.uniform(near * 1.15, far * 0.85)
            cx = (e + rng.uniform(0.35, 0.65)) * slot
            ew = np.clip(rng.uniform(0.6, 1.0) * h * 0.28 * near * 3 / d,
                         2, 0.9 * slot)
            eh = np.clip(rng.uniform(0.6, 1.2) * h * 0.35 * near * 3 / d,
                         2, 0.5 * h)
            rgb = rng.uniform(0.10, 0.90, 3)
            elements.append((d, cx, ew, eh, rgb))
    for d, cx, ew, eh, rgb in sorted(elements, key=lambda el: -el[0]):
        bottom = horizon + int(np.argmin(np.abs(ramp - d)))
        top = max(0, bottom - int(round(eh)) + 1)
        c0 = int(np.clip(cx - ew / 2, 0, w - 1))
        c1 = int(np.clip(cx + ew / 2, c0 + 1, w))
        color[top:bottom + 1, c0:c1] = rgb
        depth[top:bottom + 1, c0:c1] = d

    return np.clip(color, 0.0, 1.0), depth


# ---------------------------------------------------------------------------
# Corpus construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatterParams:
    """Atmospheric light and scattering coefficient for one rendering."""

    atmospheric_light: float
    scattering_coeff: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.atmospheric_light <= 1.0):
            raise ValidationError("atmospheric light must be in [0,1]")
        if self.scattering_coeff < 0:
            raise ValidationError("scattering coefficient must be >= 0")


@dataclass(frozen=True)
class CorpusParams:
    """Sampling law for per-image scatter parameters: A ~ U[a_range], fixed beta."""

    a_range: tuple[float, float] = (0.8, 1.0)
    beta: float = 1.0
    seed: int = 0

    def draw(self, rng: np.random.Generator) -> ScatterParams:
        return ScatterParams(rng.uniform(*self.a_range), self.beta)


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    clear_path: str
    depth_path: str
    haze_path: str
    a: float
    split: str


@dataclass
class Manifest:
    """Corpus index: one record per scene, with the train/test split.

    Serialized as tab-separated lines (id, clear, depth, haze, A, split)
    after '#'-prefixed header lines; paths are relative to the manifest
    file's directory.
    """

    records: list[ManifestRecord]
    root: Path

    def split(self, name: str) -> list[ManifestRecord]:
        if name not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {name!r}")
        return [r for r in self.records if r.split == name]

    def resolve(self, rel_path: str) -> Path:
        return self.root / rel_path

    def save(self, path: str | Path) -> None:
        path = Path(path)
        lines = [f"# hazesynth manifest v{MANIFEST_VERSION}",
                 "# id\tclear\tdepth\thaze\tA\tsplit"]
        for r in self.records:
            lines.append("\t".join(
                [r.sample_id, r.clear_path, r.depth_path, r.haze_path,
                 format(r.a, ".17g"), r.split]))
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        records = []
        for line in path.read_text().splitlines():
            if not line or line.startswith("#"):
                continue
            sid, clear, depth, haze, a, split = line.split("\t")
            records.append(ManifestRecord(sid, clear, depth, haze, float(a), split))
        return cls(records=records, root=path.parent)


def split_sizes(n: int, ratio: tuple[int, int] = (3, 1)) -> tuple[int, int]:
    """Train/test sizes for an n-scene corpus under an integer ratio."""
    n_train = n * ratio[0] // (ratio[0] + ratio[1])
    return n_train, n - n_train


def render_sample(clear: np.ndarray, depth: np.ndarray, params: ScatterParams
                  ) -> np.ndarray:
    """Haze image exactly as the corpus stores it: computed from the 8-bit
    quantized clear image and float32 depth, so recomputing from the files
    on disk reproduces it bit for bit."""
    clear_q = imgio.dequantize_u8(imgio.quantize_u8(clear))
    depth32 = np.asarray(depth, dtype=np.float32).astype(np.float64)
    t = transmittance(depth32, params.scattering_coeff)
    return apply_haze(clear_q, t, params.atmospheric_light)


def build_corpus(n_scenes: int, out_dir: str | Path,
                 params: CorpusParams = CorpusParams(),
                 width: int = 64, height: int = 64,
                 element_range: tuple[int, int] = (3, 7),
                 split_ratio: tuple[int, int] = (3, 1)) -> Manifest:
    """Generate scenes, render their haze counterparts and write the corpus.

    Per sample: clear PNG, depth PFM, haze PNG, plus the manifest row with
    the drawn atmospheric light. Deterministic in (params.seed, geometry).
    """
    if n_scenes < 1:
        raise ValidationError("n_scenes must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(params.seed)
    n_train, _ = split_sizes(n_scenes, split_ratio)
    records = []
    for idx in range(n_scenes):
        scene_seed = int(rng.integers(0, 2**31 - 1))
        n_elem = int(rng.integers(element_range[0], element_range[1] + 1))
        scatter = params.draw(rng)
        spec = SceneSpec(seed=scene_seed, width=width, height=height,
                         element_count=n_elem)
        clear, depth = generate_scene(spec)
        haze = render_sample(clear, depth, scatter)

        sid = f"scene_{idx:05d}"
        rec = ManifestRecord(
            sample_id=sid,
            clear_path=f"{sid}_clear.png",
            depth_path=f"{sid}_depth.pfm",
            haze_path=f"{sid}_haze.png",
            a=scatter.atmospheric_light,
            split="train" if idx < n_train else "test",
        )
        imgio.write_png(out_dir / rec.clear_path, clear)
        imgio.write_pfm(out_dir / rec.depth_path, depth)
        imgio.write_png(out_dir / rec.haze_path, haze)
        records.append(rec)

    manifest = Manifest(records=records, root=out_dir)
    manifest.save(out_dir / MANIFEST_NAME)
    return manifest
