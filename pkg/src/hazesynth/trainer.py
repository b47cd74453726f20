"""Alternating GAN training: discriminator phase, then encoder/generator
phase on the full weighted objective, with the halving learning-rate
schedule, per-iteration interpolation draws, metrics logging and
resumable checkpoints.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import objectives
from .data_pipeline import Batch, Loader
from .networks import Models, load_checkpoint, save_checkpoint
from .objectives import (InterpolationDraw, LossReport, LossWeights,
                         NonFiniteLossError, adversarial_terms_from_maps,
                         build_report, content_adversarial_loss,
                         cross_cycle_loss, domain_classification_loss,
                         interpolate_style, reconstruction_losses,
                         style_regression_loss)

K_RNG_SALT = 17


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 4
    lr_halving_period: int = 10_000
    total_iters: int = 200_000
    checkpoint_every: int = 10_000
    seed: int = 0

    def __post_init__(self):
        for name in ("lr0", "adam_beta1", "adam_beta2", "batch_size",
                     "lr_halving_period", "total_iters", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def learning_rate(iteration: int, config: TrainConfig) -> float:
    """lr(t) = lr0 * 0.5^floor(t / halving_period); pure in the counter."""
    return config.lr0 * 0.5 ** (iteration // config.lr_halving_period)


def param_checksum(module: torch.nn.Module) -> str:
    """Order-stable digest of all parameter bytes; bit-exact comparisons."""
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def write_metrics_line(fh, iteration: int, lr: float, k: float,
                       report: LossReport) -> None:
    parts = [f"iter={iteration}", f"lr={lr:.17g}", f"k={k:.17g}"]
    parts += [f"{name}={val:.17g}" for name, val in report.as_dict().items()]
    fh.write(" ".join(parts) + "\n")
    fh.flush()


def parse_metrics_log(path) -> dict[str, list[float]]:
    """Read a metrics log back into column lists keyed by field name."""
    columns: dict[str, list[float]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        for token in line.split():
            name, val = token.split("=", 1)
            columns.setdefault(name, []).append(float(val))
    return columns


class Trainer:
    """Single-writer training loop over a Models bundle.

    Three optimizers: one joint Adam over both encoders and the generator,
    one for the image discriminator (with its domain head), one for the
    content discriminator. The domain head trains on real images with true
    labels; the generator is additionally pushed to make each synthesis
    classify as its target domain (both folded in with the adversarial
    weight).
    """

    def __init__(self, models: Models, weights: LossWeights,
                 config: TrainConfig, least_squares: bool = False):
        self.models = models
        self.weights = weights
        self.config = config
        self.least_squares = least_squares
        self.iteration = 0
        betas = (config.adam_beta1, config.adam_beta2)
        eg_params = (list(models.content_encoder.parameters())
                     + list(models.style_encoder.parameters())
                     + list(models.generator.parameters()))
        self.opt_eg = torch.optim.Adam(eg_params, lr=config.lr0, betas=betas)
        self.opt_d = torch.optim.Adam(models.discriminator.parameters(),
                                      lr=config.lr0, betas=betas)
        self.opt_dc = torch.optim.Adam(models.content_discriminator.parameters(),
                                       lr=config.lr0, betas=betas)
        self.k_rng = np.random.default_rng((config.seed, K_RNG_SALT))
        self.last_k: float | None = None

    def _set_lr(self, lr: float) -> None:
        for opt in (self.opt_eg, self.opt_d, self.opt_dc):
            for group in opt.param_groups:
                group["lr"] = lr

    def train_step(self, batch: Batch) -> LossReport:
        m = self.models
        x_i, x_j = batch.x_i, batch.x_j

        # --- Phase 1: discriminators, generator outputs detached ---
        with torch.no_grad():
            c_i0, s_i0 = m.content_encoder(x_i), m.style_encoder(x_i)
            c_j0, s_j0 = m.content_encoder(x_j), m.style_encoder(x_j)
            fake_j0 = m.generator(c_i0, s_j0)   # haze -> haze-free
            fake_i0 = m.generator(c_j0, s_i0)   # haze-free -> haze
        maps_ri, logits_ri = m.discriminator(x_i)
        maps_rj, logits_rj = m.discriminator(x_j)
        maps_fi, _ = m.discriminator(fake_i0)
        maps_fj, _ = m.discriminator(fake_j0)
        adv = adversarial_terms_from_maps(maps_ri, maps_rj, maps_fi, maps_fj,
                                          least_squares=self.least_squares)
        l_cls_d = (domain_classification_loss(logits_ri, 0)
                   + domain_classification_loss(logits_rj, 1))
        d_loss = adv.l_di + adv.l_dj + l_cls_d
        self.opt_d.zero_grad()
        d_loss.backward()
        self.opt_d.step()

        l_advc_d = content_adversarial_loss(c_i0, c_j0, m.content_discriminator)
        self.opt_dc.zero_grad()
        l_advc_d.backward()
        self.opt_dc.step()

        # --- Phase 2: encoders + generator on the full objective ---
        c_i, s_i = m.content_encoder(x_i), m.style_encoder(x_i)
        c_j, s_j = m.content_encoder(x_j), m.style_encoder(x_j)
        codes = (c_i, s_i, c_j, s_j)
        recon_x, recon_c, recon_s = reconstruction_losses(
            x_i, x_j, m.content_encoder, m.style_encoder, m.generator, codes=codes)
        cyc = cross_cycle_loss(
            x_i, x_j, m.content_encoder, m.style_encoder, m.generator, codes=codes)

        draw = InterpolationDraw.sample(self.k_rng)
        self.last_k = draw.k
        s_k = interpolate_style(s_i, s_j, draw.k)
        l_s = style_regression_loss(c_j, s_k, m.style_encoder, m.generator)

        maps_gj, logits_gj = m.discriminator(cyc.x_ij)
        maps_gi, logits_gi = m.discriminator(cyc.x_ji)
        gen_adv = adversarial_terms_from_maps(
            maps_ri, maps_rj, maps_gi, maps_gj,
            least_squares=self.least_squares).generator_total()
        l_advc = content_adversarial_loss(c_i, c_j, m.content_discriminator)
        l_cls_g = (domain_classification_loss(logits_gj, 1)
                   + domain_classification_loss(logits_gi, 0))

        w = self.weights
        g_objective = (w.adv * gen_adv
                       - w.advc * l_advc
                       + w.recon_x * recon_x
                       + w.recon_c * recon_c
                       + w.regre_s * (recon_s + l_s)
                       + w.cc * cyc.loss
                       + w.adv * l_cls_g)
        self.opt_eg.zero_grad()
        g_objective.backward()
        self.opt_eg.step()

        report = build_report(adv.l_di, adv.l_dj, l_advc, recon_x, recon_c,
                              recon_s, l_s, cyc.loss, l_cls_g, w)
        try:
            report.check_finite()
        except NonFiniteLossError as e:
            raise NonFiniteLossError(e.term, getattr(report, e.term),
                                     iteration=self.iteration) from None
        return report

    def train(self, loader: Loader, run_dir, log_name: str = "loss_log.txt",
              progress: bool = False) -> Path:
        """Run to total_iters, streaming the metrics log and periodic
        checkpoints into run_dir; returns the final checkpoint path."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        log_path = run_dir / log_name
        final = run_dir / "checkpoint_final.pt"
        mode = "a" if self.iteration else "w"
        with open(log_path, mode) as fh:
            while self.iteration < self.config.total_iters:
                lr = learning_rate(self.iteration, self.config)
                self._set_lr(lr)
                batch = loader.batch_at(self.iteration)
                report = self.train_step(batch)
                write_metrics_line(fh, self.iteration, lr, self.last_k, report)
                self.iteration += 1
                if progress and self.iteration % 100 == 0:
                    print(f"iter {self.iteration}/{self.config.total_iters} "
                          f"total={report.total:.4f}", flush=True)
                if (self.iteration % self.config.checkpoint_every == 0
                        or self.iteration == self.config.total_iters):
                    self.checkpoint(run_dir / f"checkpoint_{self.iteration:07d}.pt")
        self.checkpoint(final)
        return final

    def optim_state(self) -> dict:
        return {"eg": self.opt_eg.state_dict(), "d": self.opt_d.state_dict(),
                "dc": self.opt_dc.state_dict()}

    def rng_state(self) -> dict:
        return {"torch": torch.get_rng_state(),
                "k_rng": self.k_rng.bit_generator.state}

    def checkpoint(self, path) -> None:
        save_checkpoint(path, self.models, optim_state=self.optim_state(),
                        iteration=self.iteration, rng_state=self.rng_state())

    def restore(self, path) -> int:
        """Load models, optimizer moments, iteration and RNG streams; the
        resumed run continues exactly as if never interrupted."""
        payload = load_checkpoint(path, self.models)
        self.opt_eg.load_state_dict(payload["optim"]["eg"])
        self.opt_d.load_state_dict(payload["optim"]["d"])
        self.opt_dc.load_state_dict(payload["optim"]["dc"])
        self.iteration = payload["iteration"]
        if payload.get("rng"):
            torch.set_rng_state(payload["rng"]["torch"])
            self.k_rng.bit_generator.state = payload["rng"]["k_rng"]
        return self.iteration
