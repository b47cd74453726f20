"""The five network roles: shared content encoder, shared style encoder,
single generator, multiscale patch discriminator with a domain head, and
the content discriminator.

Layer schedules follow a fixed table scaled by a global width multiplier:

  content encoder   CONV N64 K7 S1 | CONV N128 K4 S2 | CONV N128 K4 S2
                    | RESBLK N256 K3 x4            (output stride 4)
  style encoder     CONV N64 K7 S1 | CONV N128 K4 S2 | CONV N256 K4 S2
                    | AdaptiveAvgPool -> 1x1 | CONV N<S> K1, sigmoid
  generator         RESBLK N256 K3 x4 (style-modulated)
                    | DECONV N128 K5 S2 | DECONV N64 K5 S2 | DECONV N3 K7 S1, tanh
  discriminator     PatchGAN trunk N64/128/256/512 K4 S2 x4 + 1-ch patch head,
                    at 2 scales; scale-0 trunk also feeds a 2-way domain head
  content disc.     4 convs K3 over the content map -> 1-ch patch grid

Instance normalization in the content encoder and generator, none in the
discriminators. The style encoder carries no normalization: instance norm
would strip exactly the image-global statistics the style code has to
carry.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Corrupt, unreadable or version-incompatible checkpoint."""


class SpecMismatchError(CheckpointError):
    """Checkpoint was written by a model with a different NetSpec."""


@dataclass(frozen=True)
class NetSpec:
    """Architecture parameters; all channel counts scale with width_mult."""

    style_dim: int = 8
    width_mult: float = 1.0
    image_channels: int = 3
    n_scales: int = 2               # discriminator scales
    style_injection: str = "adain"  # "adain" | "concat"

    def __post_init__(self):
        if self.style_dim < 1:
            raise ValueError("style_dim must be >= 1")
        if self.style_injection not in ("adain", "concat"):
            raise ValueError(f"unknown style_injection {self.style_injection!r}")

    def ch(self, n: int) -> int:
        return max(1, int(round(n * self.width_mult)))

    @property
    def content_channels(self) -> int:
        return self.ch(256)


def _conv(cin, cout, k, s, pad, reflect=False):
    if reflect:
        return nn.Sequential(nn.ReflectionPad2d(pad),
                             nn.Conv2d(cin, cout, k, s, 0))
    return nn.Conv2d(cin, cout, k, s, pad)


def gaussian_init(m: nn.Module) -> None:
    if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(m.weight, 0.0, 0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)


class ResBlock(nn.Module):
    """IN residual block; 1x1 projection shortcut when channels change."""

    def __init__(self, cin, cout):
        super().__init__()
        self.conv1 = _conv(cin, cout, 3, 1, 1, reflect=True)
        self.norm1 = nn.InstanceNorm2d(cout)
        self.conv2 = _conv(cout, cout, 3, 1, 1, reflect=True)
        self.norm2 = nn.InstanceNorm2d(cout)
        self.proj = nn.Conv2d(cin, cout, 1) if cin != cout else None

    def forward(self, x):
        h = F.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        skip = x if self.proj is None else self.proj(x)
        return F.relu(h + skip)


class ContentEncoder(nn.Module):
    def __init__(self, spec: NetSpec):
        super().__init__()
        c64, c128, c256 = spec.ch(64), spec.ch(128), spec.ch(256)
        self.stem = nn.Sequential(
            _conv(spec.image_channels, c64, 7, 1, 3, reflect=True),
            nn.InstanceNorm2d(c64),
            nn.Conv2d(c64, c128, 4, 2, 1), nn.InstanceNorm2d(c128), nn.ReLU(),
            nn.Conv2d(c128, c128, 4, 2, 1), nn.InstanceNorm2d(c128), nn.ReLU(),
        )
        self.blocks = nn.Sequential(
            ResBlock(c128, c256), ResBlock(c256, c256),
            ResBlock(c256, c256), ResBlock(c256, c256),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ValueError(f"spatial dims must be divisible by 4, got {tuple(x.shape[-2:])}")
        return self.blocks(self.stem(x))


class StyleEncoder(nn.Module):
    def __init__(self, spec: NetSpec):
        super().__init__()
        c64, c128, c256 = spec.ch(64), spec.ch(128), spec.ch(256)
        self.net = nn.Sequential(
            _conv(spec.image_channels, c64, 7, 1, 3, reflect=True), nn.ReLU(),
            nn.Conv2d(c64, c128, 4, 2, 1), nn.ReLU(),
            nn.Conv2d(c128, c256, 4, 2, 1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(c256, spec.style_dim, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(x)).flatten(1)


class AdaIN(nn.Module):
    """Instance normalization whose affine comes from the style code."""

    def __init__(self, channels, style_dim):
        super().__init__()
        self.affine = nn.Linear(style_dim, 2 * channels)
        self.channels = channels

    def forward(self, x, s):
        gb = self.affine(s).view(-1, 2 * self.channels, 1, 1)
        gamma, beta = gb[:, :self.channels], gb[:, self.channels:]
        mu = x.mean(dim=(2, 3), keepdim=True)
        var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
        xhat = (x - mu) / torch.sqrt(var + 1e-5)
        return (1 + gamma) * xhat + beta


class AdaINResBlock(nn.Module):
    def __init__(self, channels, style_dim):
        super().__init__()
        self.conv1 = _conv(channels, channels, 3, 1, 1, reflect=True)
        self.ada1 = AdaIN(channels, style_dim)
        self.conv2 = _conv(channels, channels, 3, 1, 1, reflect=True)
        self.ada2 = AdaIN(channels, style_dim)

    def forward(self, x, s):
        h = F.relu(self.ada1(self.conv1(x), s))
        h = self.ada2(self.conv2(h), s)
        return F.relu(h + x)


class Generator(nn.Module):
    """Decodes a content map plus style code into an image in [-1, 1]."""

    def __init__(self, spec: NetSpec):
        super().__init__()
        c256, c128, c64 = spec.ch(256), spec.ch(128), spec.ch(64)
        self.injection = spec.style_injection
        if self.injection == "adain":
            self.blocks = nn.ModuleList(
                AdaINResBlock(c256, spec.style_dim) for _ in range(4))
        else:
            self.merge = nn.Conv2d(c256 + spec.style_dim, c256, 1)
            self.blocks = nn.ModuleList(ResBlock(c256, c256) for _ in range(4))
        self.up = nn.Sequential(
            nn.ConvTranspose2d(c256, c128, 5, 2, padding=2, output_padding=1),
            nn.InstanceNorm2d(c128), nn.ReLU(),
            nn.ConvTranspose2d(c128, c64, 5, 2, padding=2, output_padding=1),
            nn.InstanceNorm2d(c64), nn.ReLU(),
            nn.ConvTranspose2d(c64, spec.image_channels, 7, 1, padding=3),
        )

    def forward(self, c: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        if c.shape[0] != s.shape[0]:
            raise ValueError(f"batch mismatch: content {c.shape[0]} vs style {s.shape[0]}")
        h = c
        if self.injection == "adain":
            for blk in self.blocks:
                h = blk(h, s)
        else:
            smap = s[:, :, None, None].expand(-1, -1, c.shape[2], c.shape[3])
            h = self.merge(torch.cat([h, smap], dim=1))
            for blk in self.blocks:
                h = blk(h)
        return torch.tanh(self.up(h))


class _PatchTrunk(nn.Module):
    def __init__(self, spec: NetSpec):
        super().__init__()
        chans = [spec.image_channels] + [spec.ch(n) for n in (64, 128, 256, 512)]
        layers = []
        for cin, cout in zip(chans, chans[1:]):
            layers += [nn.Conv2d(cin, cout, 4, 2, 1), nn.LeakyReLU(0.2)]
        self.trunk = nn.Sequential(*layers)
        self.patch = nn.Conv2d(chans[-1], 1, 3, 1, 1)

    def forward(self, x):
        feat = self.trunk(x)
        return self.patch(feat), feat


class Discriminator(nn.Module):
    """Multiscale PatchGAN. Returns per-scale realness logit maps and a
    per-image 2-way domain logit vector (index 0 = haze, 1 = haze-free)
    computed from the full-resolution trunk.

    Patch grid at full resolution is H/16 x W/16 for H, W divisible by 16.
    """

    def __init__(self, spec: NetSpec):
        super().__init__()
        self.scales = nn.ModuleList(_PatchTrunk(spec) for _ in range(spec.n_scales))
        self.cls_head = nn.Conv2d(spec.ch(512), 2, 1)

    def forward(self, x: torch.Tensor) -> tuple[list[torch.Tensor], torch.Tensor]:
        patch_maps = []
        domain_logits = None
        for i, scale_net in enumerate(self.scales):
            patches, feat = scale_net(x)
            patch_maps.append(patches)
            if i == 0:
                domain_logits = self.cls_head(
                    F.adaptive_avg_pool2d(feat, 1)).flatten(1)
            x = F.avg_pool2d(x, 3, stride=2, padding=1)
        return patch_maps, domain_logits


class ContentDiscriminator(nn.Module):
    """Patch domain scores over the content map: logit > 0 reads "haze".

    Grid size for an HxW content map is ceil(H/4) x ceil(W/4) (two stride-2
    convs, then two stride-1).
    """

    def __init__(self, spec: NetSpec):
        super().__init__()
        c = spec.content_channels
        self.net = nn.Sequential(
            nn.Conv2d(c, c, 3, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(c, c, 3, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(c, c, 3, 1, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(c, 1, 3, 1, 1),
        )

    def forward(self, c: torch.Tensor) -> torch.Tensor:
        return self.net(c)


@dataclass
class Models:
    """The trainable roles, built from one NetSpec."""

    spec: NetSpec
    content_encoder: ContentEncoder
    style_encoder: StyleEncoder
    generator: Generator
    discriminator: Discriminator
    content_discriminator: ContentDiscriminator

    def roles(self) -> dict[str, nn.Module]:
        return {
            "content_encoder": self.content_encoder,
            "style_encoder": self.style_encoder,
            "generator": self.generator,
            "discriminator": self.discriminator,
            "content_discriminator": self.content_discriminator,
        }

    def train(self):
        for m in self.roles().values():
            m.train()
        return self

    def eval(self):
        for m in self.roles().values():
            m.eval()
        return self

    def parameter_counts(self) -> dict[str, int]:
        return {name: sum(p.numel() for p in m.parameters())
                for name, m in self.roles().items()}


def build_models(spec: NetSpec) -> Models:
    models = Models(
        spec=spec,
        content_encoder=ContentEncoder(spec),
        style_encoder=StyleEncoder(spec),
        generator=Generator(spec),
        discriminator=Discriminator(spec),
        content_discriminator=ContentDiscriminator(spec),
    )
    for m in models.roles().values():
        m.apply(gaussian_init)
    return models


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(path, models: Models, optim_state: dict | None = None,
                    iteration: int = 0, rng_state: dict | None = None) -> None:
    """Write a version-tagged checkpoint: NetSpec, parameters by role,
    optimizer state, iteration counter and RNG states."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "netspec": asdict(models.spec),
        "params": {name: m.state_dict() for name, m in models.roles().items()},
        "optim": optim_state,
        "iteration": iteration,
        "rng": rng_state,
    }
    torch.save(payload, str(path))


def load_checkpoint(path, models: Models | None = None):
    """Load a checkpoint. With `models` given, restores parameters in place
    (NetSpec must match); returns the raw payload either way."""
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or "version" not in payload:
        raise CheckpointError(f"not a hazesynth checkpoint: {path}")
    if payload["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload['version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    if models is not None:
        if payload["netspec"] != asdict(models.spec):
            raise SpecMismatchError(
                f"checkpoint NetSpec {payload['netspec']} does not match "
                f"model NetSpec {asdict(models.spec)}")
        for name, m in models.roles().items():
            m.load_state_dict(payload["params"][name])
    return payload


def models_from_checkpoint(path) -> tuple[Models, dict]:
    """Build models with the checkpoint's own NetSpec and load its weights."""
    payload = load_checkpoint(path)
    models = build_models(NetSpec(**payload["netspec"]))
    for name, m in models.roles().items():
        m.load_state_dict(payload["params"][name])
    return models, payload
