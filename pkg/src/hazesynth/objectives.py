"""Loss terms for the disentangling translation objective.

Conventions:
  - every returned loss is the quantity its owner minimizes;
  - two-domain losses are the sum of the per-domain terms;
  - patch discriminator scores are averaged over patches, then scales;
  - probabilities are floored at 1e-7 inside logs (saturating GAN form).

The style-regression path is the self-supervision: draw k, mix the two
style codes into a pseudo-label s_k, synthesize from (c_j, s_k), and pull
the re-encoded style of the synthesis back to s_k. The pseudo-label side
receives no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import torch

PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class LossWeights:
    adv: float = 1.0
    advc: float = 10.0
    recon_x: float = 10.0
    recon_c: float = 1.0
    regre_s: float = 20.0
    cc: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be >= 0")


@dataclass
class LossReport:
    """Named scalar per loss term plus the weighted total.

    `total` is the six-term weighted objective; the domain-classification
    auxiliary `l_cls` is reported separately (it is applied with the
    adversarial weight during updates but is not one of the six terms).
    """

    l_di: float
    l_dj: float
    l_advc: float
    l_recon_x: float
    l_recon_c: float
    l_recon_s: float
    l_s: float
    l_cc: float
    l_cls: float
    total: float

    FIELDS = ("l_di", "l_dj", "l_advc", "l_recon_x", "l_recon_c",
              "l_recon_s", "l_s", "l_cc", "l_cls", "total")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.FIELDS}

    def check_finite(self) -> None:
        for name in self.FIELDS:
            if not np.isfinite(getattr(self, name)):
                raise NonFiniteLossError(name, getattr(self, name))


class NonFiniteLossError(RuntimeError):
    def __init__(self, term: str, value: float, iteration: int | None = None):
        self.term = term
        self.iteration = iteration
        at = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"non-finite loss term {term}={value}{at}")


@dataclass(frozen=True)
class InterpolationDraw:
    """The per-iteration interpolation coefficient."""

    k: float

    def __post_init__(self):
        if not (0.0 <= self.k <= 1.0):
            raise ValueError(f"k must be in [0,1], got {self.k}")

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "InterpolationDraw":
        return cls(float(rng.uniform(0.0, 1.0)))


def _prob(logits: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(logits).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)


def _mean_log_score(patch_maps, real: bool) -> torch.Tensor:
    """log D averaged over patches then scales; `real` picks log p vs log(1-p)."""
    terms = []
    for m in patch_maps:
        p = _prob(m)
        terms.append(torch.log(p if real else 1.0 - p).mean())
    return torch.stack(terms).mean()


def _mean_square_score(patch_maps, target: float) -> torch.Tensor:
    terms = [((torch.sigmoid(m) - target) ** 2).mean() for m in patch_maps]
    return torch.stack(terms).mean()


@dataclass
class AdversarialTerms:
    """Discriminator-side losses and the generator-side terms.

    l_di / l_dj are what the discriminator minimizes (the negated written
    objective). gen_i / gen_j are the saturating generator-side terms
    log(1 - D(fake)), which the generator minimizes.
    """

    l_di: torch.Tensor
    l_dj: torch.Tensor
    gen_i: torch.Tensor
    gen_j: torch.Tensor

    def generator_total(self):
        return self.gen_i + self.gen_j


def adversarial_terms_from_maps(maps_ri, maps_rj, maps_fi, maps_fj,
                                least_squares: bool = False) -> AdversarialTerms:
    """Adversarial terms from already-scored multiscale patch maps."""
    if least_squares:
        l_di = _mean_square_score(maps_ri, 1.0) + _mean_square_score(maps_fi, 0.0)
        l_dj = _mean_square_score(maps_rj, 1.0) + _mean_square_score(maps_fj, 0.0)
        gen_i = _mean_square_score(maps_fi, 1.0)
        gen_j = _mean_square_score(maps_fj, 1.0)
    else:
        l_di = -_mean_log_score(maps_ri, True) - _mean_log_score(maps_fi, False)
        l_dj = -_mean_log_score(maps_rj, True) - _mean_log_score(maps_fj, False)
        gen_i = _mean_log_score(maps_fi, False)
        gen_j = _mean_log_score(maps_fj, False)
    for name, v in (("L_DI", l_di), ("L_DJ", l_dj)):
        if not torch.isfinite(v):
            raise NonFiniteLossError(name, float(v))
    return AdversarialTerms(l_di=l_di, l_dj=l_dj, gen_i=gen_i, gen_j=gen_j)


def adversarial_losses(real_i, real_j, fake_i, fake_j, discriminator,
                       least_squares: bool = False) -> AdversarialTerms:
    """Image-domain adversarial losses over the multiscale patch maps.

    real_i / fake_i live in the haze domain, real_j / fake_j haze-free;
    both domains weigh equally. Scores from the patch heads only (the
    domain head is handled by domain_classification_loss).
    """
    maps_ri, _ = discriminator(real_i)
    maps_rj, _ = discriminator(real_j)
    maps_fi, _ = discriminator(fake_i)
    maps_fj, _ = discriminator(fake_j)
    return adversarial_terms_from_maps(maps_ri, maps_rj, maps_fi, maps_fj,
                                       least_squares=least_squares)


def content_adversarial_loss(c_i, c_j, content_discriminator) -> torch.Tensor:
    """Cross-entropy of the content discriminator: haze content scored
    toward 1, haze-free toward 0. The discriminator minimizes this value;
    the content encoder descends the written (negated) objective, which the
    trainer applies by maximizing this value."""
    p_i = _prob(content_discriminator(c_i))
    p_j = _prob(content_discriminator(c_j))
    loss = -(torch.log(p_i).mean() + torch.log(1.0 - p_j).mean())
    if not torch.isfinite(loss):
        raise NonFiniteLossError("L_advc", float(loss))
    return loss


def interpolate_style(s_i: torch.Tensor, s_j: torch.Tensor, k: float) -> torch.Tensor:
    """Convex combination k*s_i + (1-k)*s_j, exact at the endpoints."""
    if not (0.0 <= k <= 1.0):
        raise ValueError(f"k must be in [0,1], got {k}")
    return k * s_i + (1.0 - k) * s_j


def style_regression_loss(c_j, s_k, style_encoder, generator) -> torch.Tensor:
    """L1 between the re-encoded style of G(c_j, s_k) and the pseudo-label
    s_k. The target is detached: a label receives no gradient."""
    x_k = generator(c_j, s_k)
    return (style_encoder(x_k) - s_k.detach()).abs().mean()


def reconstruction_losses(x_i, x_j, content_encoder, style_encoder, generator,
                          codes=None):
    """Self-reconstruction L1 losses (image, content, style), summed over
    the two domains. `codes` may carry precomputed (c_i, s_i, c_j, s_j)."""
    if codes is None:
        codes = (content_encoder(x_i), style_encoder(x_i),
                 content_encoder(x_j), style_encoder(x_j))
    c_i, s_i, c_j, s_j = codes
    recon_x = x_i.new_zeros(())
    recon_c = x_i.new_zeros(())
    recon_s = x_i.new_zeros(())
    for x, c, s in ((x_i, c_i, s_i), (x_j, c_j, s_j)):
        r = generator(c, s)
        recon_x = recon_x + (r - x).abs().mean()
        recon_c = recon_c + (content_encoder(r) - c).abs().mean()
        recon_s = recon_s + (style_encoder(r) - s).abs().mean()
    return recon_x, recon_c, recon_s


@dataclass
class CycleResult:
    loss: torch.Tensor
    x_ij: torch.Tensor  # haze -> haze-free
    x_ji: torch.Tensor  # haze-free -> haze


def cross_cycle_loss(x_i, x_j, content_encoder, style_encoder, generator,
                     codes=None) -> CycleResult:
    """Two-stage swap translation: styles are swapped, the first-stage
    outputs are re-encoded, and swapping back must recover the inputs."""
    if codes is None:
        codes = (content_encoder(x_i), style_encoder(x_i),
                 content_encoder(x_j), style_encoder(x_j))
    c_i, s_i, c_j, s_j = codes
    x_ij = generator(c_i, s_j)
    x_ji = generator(c_j, s_i)
    x_iji = generator(content_encoder(x_ij), style_encoder(x_ji))
    x_jij = generator(content_encoder(x_ji), style_encoder(x_ij))
    loss = (x_i - x_iji).abs().mean() + (x_j - x_jij).abs().mean()
    return CycleResult(loss=loss, x_ij=x_ij, x_ji=x_ji)


def domain_classification_loss(domain_logits: torch.Tensor,
                               domain_index: int) -> torch.Tensor:
    """Cross-entropy of the 2-way domain head (0 = haze, 1 = haze-free)."""
    target = domain_logits.new_full((domain_logits.shape[0],), domain_index,
                                    dtype=torch.long)
    return torch.nn.functional.cross_entropy(domain_logits, target)


def total_loss(parts: dict[str, float], weights: LossWeights) -> float:
    """Weighted six-term total. `parts` keys: adv, advc, recon_x, recon_c,
    regre_s, cc."""
    required = {"adv", "advc", "recon_x", "recon_c", "regre_s", "cc"}
    missing = required - parts.keys()
    if missing:
        raise KeyError(f"missing loss parts: {sorted(missing)}")
    return (weights.adv * parts["adv"]
            + weights.advc * parts["advc"]
            + weights.recon_x * parts["recon_x"]
            + weights.recon_c * parts["recon_c"]
            + weights.regre_s * parts["regre_s"]
            + weights.cc * parts["cc"])


def build_report(l_di, l_dj, l_advc, l_recon_x, l_recon_c, l_recon_s, l_s,
                 l_cc, l_cls, weights: LossWeights) -> LossReport:
    """Assemble the per-iteration report; total follows the six-term sum."""
    vals = {k: float(v) for k, v in locals().items() if k != "weights"}
    total = total_loss({
        "adv": vals["l_di"] + vals["l_dj"],
        "advc": vals["l_advc"],
        "recon_x": vals["l_recon_x"],
        "recon_c": vals["l_recon_c"],
        "regre_s": vals["l_recon_s"] + vals["l_s"],
        "cc": vals["l_cc"],
    }, weights)
    return LossReport(total=total, **vals)
