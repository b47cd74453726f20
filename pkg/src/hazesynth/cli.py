"""Command-line entry point wiring the whole pipeline together.

Subcommands: gen-data, train, synthesize, evaluate, probe, plot-losses.
Every subcommand validates its inputs before writing anything and exits
non-zero with a diagnostic on stderr when given bad arguments.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from . import data_pipeline, density_control, evalprobe, imgio, scene_synth
from .networks import build_models, models_from_checkpoint
from .objectives import interpolate_style
from .trainer import Trainer, parse_metrics_log


class CliError(RuntimeError):
    pass


def _load_run_config(args) -> config_mod.RunConfig:
    if getattr(args, "config", None):
        cfg = config_mod.load_config(args.config)
    else:
        cfg = config_mod.get_preset(args.preset)
    overrides = {}
    for flag, key in (("scenes", "corpus.n_scenes"), ("seed", "train.seed"),
                      ("iters", "train.total_iters"),
                      ("batch_size", "pipeline.batch_size"),
                      ("width_mult", "network.width_mult")):
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)
    if getattr(args, "seed", None) is not None:
        overrides["corpus.seed"] = args.seed
        overrides["pipeline.shuffle_seed"] = args.seed
    return config_mod.apply_overrides(cfg, **overrides)


def cmd_gen_data(args) -> int:
    cfg = _load_run_config(args)
    c = cfg.corpus
    manifest = scene_synth.build_corpus(
        n_scenes=c.n_scenes, out_dir=args.out, params=c.params(),
        width=c.width, height=c.height,
        element_range=(c.element_min, c.element_max))
    n_train = len(manifest.split("train"))
    print(f"wrote {len(manifest.records)} scenes ({n_train} train, "
          f"{len(manifest.records) - n_train} test) to {args.out}")
    return 0


def _manifest(path) -> scene_synth.Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / scene_synth.MANIFEST_NAME
    if not path.exists():
        raise CliError(f"manifest not found: {path}")
    return scene_synth.Manifest.load(path)


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    manifest = _manifest(args.data)
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    config_mod.save_config(cfg, run_dir / "config.toml")

    torch.manual_seed(cfg.train.seed)
    models = build_models(cfg.network)
    loader = data_pipeline.make_loader(manifest, cfg.pipeline, "train")
    trainer = Trainer(models, cfg.weights, cfg.train,
                      least_squares=cfg.least_squares)
    if args.resume:
        trainer.restore(args.resume)
        print(f"resumed at iteration {trainer.iteration}")
    final = trainer.train(loader, run_dir, progress=not args.quiet)
    print(f"finished {cfg.train.total_iters} iterations; "
          f"final checkpoint {final}")
    return 0


def _read_working(path) -> torch.Tensor:
    img = imgio.read_png(path)
    return torch.from_numpy(
        data_pipeline.to_working(img).transpose(2, 0, 1)).float().unsqueeze(0)


def cmd_synthesize(args) -> int:
    if args.alpha is not None and not (0.0 <= args.alpha <= 1.0):
        raise CliError(f"--alpha must be in [0, 1], got {args.alpha}")
    models, _ = models_from_checkpoint(args.checkpoint)
    x_j = _read_working(args.input)
    x_i = _read_working(args.reference)
    out = Path(args.out)
    if args.sweep:
        alphas = [float(a) for a in args.sweep.split(",")]
        result = density_control.sweep(x_j, x_i, alphas, models)
        imgio.write_png(out, density_control.strip_image(result.images))
        codes_path = out.with_suffix(".codes.txt")
        with open(codes_path, "w") as fh:
            for a, interp, reenc in zip(alphas, result.interpolated_codes,
                                        result.reencoded_codes):
                interp_s = ",".join(f"{v:.8g}" for v in interp[0].tolist())
                reenc_s = ",".join(f"{v:.8g}" for v in reenc[0].tolist())
                fh.write(f"alpha={a} interpolated={interp_s} reencoded={reenc_s}\n")
        print(f"wrote sweep strip {out} and style codes {codes_path}")
    else:
        req = density_control.DensityRequest(
            alpha=args.alpha, source=x_j, reference=x_i)
        img = density_control.synthesize_density(req, models)
        imgio.write_png(out, density_control.strip_image([img]))
        print(f"wrote {out}")
    return 0


@torch.no_grad()
def cmd_evaluate(args) -> int:
    models, _ = models_from_checkpoint(args.checkpoint)
    manifest = _manifest(args.data)
    embedder = evalprobe.get_embedder(args.embedder)
    models.eval()

    records = manifest.split("test")
    psnrs, ssims, dists = [], [], []
    synth_imgs, ref_imgs = [], []
    for rec in records:
        clear = imgio.read_png(manifest.resolve(rec.clear_path))
        ref = imgio.read_png(manifest.resolve(rec.haze_path))
        x_j = _read_working(manifest.resolve(rec.clear_path))
        x_i = _read_working(manifest.resolve(rec.haze_path))
        out = density_control.synthesize_density(
            density_control.DensityRequest(alpha=1.0, source=x_j, reference=x_i),
            models)
        synth = np.clip(
            data_pipeline.from_working(out[0].numpy().transpose(1, 2, 0)), 0, 1)
        psnrs.append(evalprobe.psnr(synth, ref))
        ssims.append(evalprobe.ssim(synth, ref))
        dists.append(evalprobe.perceptual_distance(synth, ref, embedder))
        synth_imgs.append(synth)
        ref_imgs.append(ref)
        del clear

    fid = evalprobe.frechet_distance(
        np.stack([embedder.embed(im) for im in synth_imgs]),
        np.stack([embedder.embed(im) for im in ref_imgs]))
    diversity = evalprobe.diversity_score(synth_imgs, embedder,
                                          n_pairs=args.pairs)
    rows = [("psnr_db", float(np.mean(psnrs))),
            ("ssim", float(np.mean(ssims))),
            ("perceptual_dist", float(np.mean(dists))),
            ("frechet", fid),
            ("diversity", diversity)]
    width = max(len(n) for n, _ in rows)
    print(f"evaluation on {len(records)} test scenes (embedder={args.embedder})")
    for name, val in rows:
        print(f"  {name:<{width}}  {val:.6g}")
    if args.out:
        with open(args.out, "w") as fh:
            for name, val in rows:
                fh.write(f"{name}={val:.10g}\n")
        print(f"wrote {args.out}")
    return 0


@torch.no_grad()
def cmd_probe(args) -> int:
    models, _ = models_from_checkpoint(args.checkpoint)
    manifest = _manifest(args.data)
    crop = imgio.read_png(
        manifest.resolve(manifest.records[0].clear_path)).shape[0]
    datasets = evalprobe.build_probe_datasets(manifest, models, crop=crop)
    lines = ["domain probe accuracy (train / test):"]
    for name in ("content", "style", "image"):
        tr, te = evalprobe.latent_domain_probe(datasets[name])
        lines.append(f"  {name:<8} {tr:.3f} / {te:.3f}")

    alphas = [0.0, 0.25, 0.5, 0.75, 1.0]
    residuals = []
    for rec in manifest.split("test")[:args.scenes]:
        x_j = _read_working(manifest.resolve(rec.clear_path))
        x_i = _read_working(manifest.resolve(rec.haze_path))
        result = density_control.sweep(x_j, x_i, alphas, models)
        residuals.append(evalprobe.collinearity(
            [c[0].numpy() for c in result.reencoded_codes]))
    lines.append(f"re-encoded sweep collinearity residual: "
                 f"median {float(np.median(residuals)):.5f} over "
                 f"{len(residuals)} scenes")

    eq = []
    for rec in manifest.split("test")[:args.scenes]:
        x_j = _read_working(manifest.resolve(rec.clear_path))
        x_i = _read_working(manifest.resolve(rec.haze_path))
        eq.append(evalprobe.equivariance_residual(
            x_i, x_j, 0.5, models.style_encoder))
    lines.append(f"equivariance residual at k=0.5: "
                 f"median {float(np.median(eq)):.5f}")
    report = "\n".join(lines)
    print(report)
    if args.out:
        Path(args.out).write_text(report + "\n")
    return 0


def cmd_plot_losses(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    columns = parse_metrics_log(args.log)
    if "iter" not in columns:
        raise CliError(f"no iterations found in {args.log}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    iters = columns["iter"]
    written = []
    for name, vals in columns.items():
        if name in ("iter", "lr", "k"):
            continue
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(iters, vals, lw=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel(name)
        ax.set_title(name)
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path.name)
    print(f"wrote {len(written)} curves to {out_dir}: {', '.join(written)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hazesynth",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_flags(sp):
        sp.add_argument("--preset", default="desk", choices=sorted(config_mod.PRESETS))
        sp.add_argument("--config", help="TOML run config (overrides --preset)")
        sp.add_argument("--seed", type=int, help="master seed override")

    g = sub.add_parser("gen-data", help="generate the procedural corpus")
    add_config_flags(g)
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the translation model")
    add_config_flags(t)
    t.add_argument("--data", required=True, help="corpus dir or manifest path")
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--iters", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--width-mult", dest="width_mult", type=float)
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("synthesize", help="density-controlled synthesis")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True, help="haze-free PNG")
    s.add_argument("--reference", required=True, help="baseline haze PNG")
    s.add_argument("--alpha", type=float)
    s.add_argument("--sweep", help="comma-separated alphas, e.g. 0,0.5,1")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)

    e = sub.add_parser("evaluate", help="image-quality metrics on the test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--embedder", default="random-conv-frozen")
    e.add_argument("--pairs", type=int, default=100)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("probe", help="disentanglement probes")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--scenes", type=int, default=16)
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_probe)

    pl = sub.add_parser("plot-losses", help="emit per-term loss curves")
    pl.add_argument("--log", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot_losses)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "synthesize" and (args.alpha is None) == (args.sweep is None):
        print("error: exactly one of --alpha / --sweep is required",
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CliError, ValueError, KeyError, FileNotFoundError,
            scene_synth.ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
