"""Command-line entry point: ``gewdiff <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .codec import encode_latent, load_codec, save_codec
from .conditioning import ConditionSet, build_conditions, default_band_indices, mask_from_segments, ndvi, fallback_segment, upsample_latent
from .core import HsiCube, NumericError, load_cube, load_segmentation, save_cube, save_segmentation, read_container, write_container
from .losses import LossWeights, loss_breakdown
from .metrics import report
from .noise import extract_edges
from .pipeline import PipelineConfig, make_denoiser, rows_to_csv, run_encode_decode_eval, run_schedule_report, run_super_resolution, run_sweep
from .rwa import RwaEncoding, rwa_decode, rwa_encode
from .sampler import LinearDenoiser, SamplerConfig, sample
from .synthetic import downsample, smooth_scene

log = logging.getLogger("gewdiff")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args: argparse.Namespace) -> PipelineConfig:
    names = {f.name for f in fields(PipelineConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names and v is not None}
    if getattr(args, "config", None):
        return PipelineConfig.from_file(args.config, **overrides)
    return PipelineConfig(**overrides)


def _add_pipeline_options(p: argparse.ArgumentParser, *, codec=True, schedule=True, sampling=False) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    if codec:
        p.add_argument("--rwa-levels", dest="rwa_levels", type=int)
        p.add_argument("--pca-k", dest="pca_k", type=int)
    if schedule:
        p.add_argument("--rho", type=float)
        p.add_argument("--sigma-max", dest="sigma_max", type=float)
        p.add_argument("--sigma-min", dest="sigma_min", type=float)
        p.add_argument("--steps", type=int)
    if sampling:
        p.add_argument("--seed", type=int)
        p.add_argument("--denoiser", choices=["gaussian", "zero", "linear-file"])
        p.add_argument("--denoiser-file", help="coefficient container for --denoiser linear-file")
        p.add_argument("--final-denoise", dest="final_denoise", action=argparse.BooleanOptionalAction, default=None)


# --- subcommands ------------------------------------------------------------


def cmd_gen_synthetic(args):
    cube, labels = smooth_scene(args.seed, args.height, args.width, args.bands, args.segments, args.noise)
    save_cube(cube, args.out)
    if args.labels_out:
        save_segmentation(labels, args.labels_out)
    if args.lr_out:
        save_cube(downsample(cube, args.factor), args.lr_out)


def cmd_encode(args):
    cfg = _config(args)
    enc = encode_latent(load_cube(args.input), levels=cfg.rwa_levels, k=cfg.pca_k, keep_residuals=args.lossless)
    save_codec(enc, args.out)
    log.info("latent %s from %d bands", enc.latent.shape, enc.rwa.model.band_counts[0])


def cmd_decode(args):
    enc = load_codec(args.codec)
    if args.latent:
        cube = enc.decode(load_cube(args.latent).data)
    else:
        cube = enc.decode(zero_residuals=not args.keep_residuals)
    save_cube(HsiCube(cube), args.out)


def cmd_rwa_encode(args):
    enc = rwa_encode(load_cube(args.input), levels=args.levels, keep_residuals=args.lossless)
    meta, arrays = enc.to_arrays()
    write_container(args.out, meta, arrays)


def cmd_rwa_decode(args):
    meta, arrays = read_container(args.input)
    enc = RwaEncoding.from_arrays(meta, arrays)
    save_cube(HsiCube(rwa_decode(enc, zero_residuals=args.zero_residuals)), args.out)


def cmd_roundtrip_eval(args):
    cfg = _config(args)
    rep = run_encode_decode_eval(load_cube(args.input), cfg, lossless=args.lossless)
    _emit(rep.to_csv({"rwa_levels": cfg.rwa_levels, "pca_k": cfg.pca_k}), args.out)


def cmd_sweep(args):
    rows = run_sweep(load_cube(args.input), _int_list(args.levels), _int_list(args.ks))
    _emit(rows_to_csv(rows), args.out)


def cmd_mask(args):
    cube = load_cube(args.input)
    red, nir = default_band_indices(cube.bands)
    red = red if args.red_band is None else args.red_band
    nir = nir if args.nir_band is None else args.nir_band
    veg = ndvi(cube, red, nir)
    if args.factor > 1:
        veg = np.clip(upsample_latent(veg[None], args.factor)[0], 0.0, 1.0)
    if args.segments:
        segs = load_segmentation(args.segments)
        if segs.shape != veg.shape and args.factor > 1:
            segs = np.repeat(np.repeat(segs, args.factor, axis=0), args.factor, axis=1)
    else:
        segs = fallback_segment(veg)
    save_cube(HsiCube(mask_from_segments(veg, segs)[None]), args.out)


def cmd_edge(args):
    edges = extract_edges(load_cube(args.input), percentile=args.percentile, dilate=args.dilate)
    save_segmentation(edges, args.out)


def cmd_schedule(args):
    _emit(run_schedule_report(_config(args)), args.out)


def _write_conditions(conditions: ConditionSet, codec, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_cube(HsiCube(conditions.lr_latent), out / "latent.cube")
    save_cube(HsiCube(conditions.mask[None]), out / "mask.cube")
    if conditions.edge is not None:
        save_segmentation(conditions.edge, out / "edge.seg")
    save_codec(codec, out / "codec.bin")


def _read_conditions(in_dir: str) -> ConditionSet:
    src = Path(in_dir)
    latent = load_cube(src / "latent.cube").data
    mask = load_cube(src / "mask.cube").data[0]
    edge = load_segmentation(src / "edge.seg") if (src / "edge.seg").exists() else None
    return ConditionSet(lr_latent=latent, mask=mask, edge=edge)


def cmd_condition(args):
    cfg = _config(args)
    segs = load_segmentation(args.segments) if args.segments else None
    conditions, codec = build_conditions(
        load_cube(args.input),
        segs,
        cfg.sr_factor,
        rwa_levels=cfg.rwa_levels,
        pca_k=cfg.pca_k,
        red_band=cfg.red_band,
        nir_band=cfg.nir_band,
        edge_percentile=cfg.edge_percentile,
        edge_dilate=cfg.edge_dilate,
        segment_grid=cfg.segment_grid,
    )
    _write_conditions(conditions, codec, args.out)


def cmd_sample(args):
    cfg = _config(args)
    conditions = _read_conditions(args.conditions)
    denoiser = make_denoiser(cfg.denoiser, conditions, args.denoiser_file)
    sampler_cfg = SamplerConfig(schedule=cfg.schedule(), seed=cfg.seed, final_denoise=cfg.final_denoise)
    z = sample(denoiser, conditions, sampler_cfg, conditions.shape)
    if not np.all(np.isfinite(z)):
        raise NumericError("sampled latent contains NaN or infinity")
    save_cube(HsiCube(z), args.out)


def cmd_sr(args):
    cfg = _config(args)
    segs = load_segmentation(args.segments) if args.segments else None
    codec = load_codec(args.codec) if args.codec else None
    if cfg.codec_source == "hr" and codec is None:
        raise ValueError("codec_source = hr needs --codec with an HR-fitted codec file")
    denoiser = None
    if cfg.denoiser == "linear-file":
        if not args.denoiser_file:
            raise ValueError("--denoiser linear-file needs --denoiser-file")
        denoiser = LinearDenoiser.load(args.denoiser_file)
    result = run_super_resolution(load_cube(args.input), segs, cfg, denoiser=denoiser, codec=codec)
    save_cube(result.cube, args.out)
    if args.conditions_out:
        _write_conditions(result.conditions, result.codec, args.conditions_out)


def cmd_metrics(args):
    rep = report(load_cube(args.pred), load_cube(args.target), data_range=args.data_range, scale_ratio=args.scale_ratio)
    _emit(rep.to_csv(), args.out)
    sys.stderr.write("note: FID is not computed (needs a pretrained feature network)\n")


def cmd_loss(args):
    lam = _float_list(args.weights)
    if len(lam) != 3:
        raise ValueError("--weights takes three comma-separated values")
    weights = LossWeights(*lam, sigma_data=args.sigma_data)
    parts = loss_breakdown(load_cube(args.pred).data, load_cube(args.target).data, args.sigma, weights)
    header = ",".join(parts)
    values = ",".join(repr(v) for v in parts.values())
    _emit(f"{header}\n{values}\n", args.out)


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gewdiff", description="Hyperspectral latent codec, diffusion sampling and metrics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--bands", type=int, default=242)
    p.add_argument("--segments", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--labels-out", help="also write the label map")
    p.add_argument("--lr-out", help="also write a block-averaged LR version")
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("encode", help="RWA + PCA encode a cube into a codec file")
    p.add_argument("--input", required=True)
    p.add_argument("--lossless", action="store_true", help="keep RWA residuals")
    p.add_argument("--out", required=True)
    _add_pipeline_options(p, schedule=False)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a codec file (or a foreign latent through it)")
    p.add_argument("--codec", required=True)
    p.add_argument("--latent", help="latent raster to decode instead of the stored one")
    p.add_argument("--keep-residuals", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rwa-encode", help="RWA transform only")
    p.add_argument("--input", required=True)
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--lossless", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rwa_encode)

    p = sub.add_parser("rwa-decode", help="inverse RWA")
    p.add_argument("--input", required=True)
    p.add_argument("--zero-residuals", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rwa_decode)

    p = sub.add_parser("roundtrip-eval", help="encode/decode a cube and report metrics")
    p.add_argument("--input", required=True)
    p.add_argument("--lossless", action="store_true")
    p.add_argument("--out")
    _add_pipeline_options(p, schedule=False)
    p.set_defaults(func=cmd_roundtrip_eval)

    p = sub.add_parser("sweep", help="round-trip metrics over RWA levels x PCA sizes")
    p.add_argument("--input", required=True)
    p.add_argument("--levels", default="1,2,3,4")
    p.add_argument("--ks", default="20,10,6,4,3")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mask", help="segment-averaged NDVI mask")
    p.add_argument("--input", required=True)
    p.add_argument("--segments")
    p.add_argument("--red-band", type=int)
    p.add_argument("--nir-band", type=int)
    p.add_argument("--factor", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("edge", help="binary edge map")
    p.add_argument("--input", required=True)
    p.add_argument("--percentile", type=float, default=90.0)
    p.add_argument("--dilate", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edge)

    p = sub.add_parser("schedule", help="noise grid as CSV (n, sigma, t, dt, gamma)")
    p.add_argument("--out")
    _add_pipeline_options(p, codec=False)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("condition", help="write the condition set for an LR cube")
    p.add_argument("--input", required=True)
    p.add_argument("--segments")
    p.add_argument("--sr-factor", dest="sr_factor", type=int)
    p.add_argument("--red-band", dest="red_band", type=int)
    p.add_argument("--nir-band", dest="nir_band", type=int)
    p.add_argument("--out", required=True, help="output directory")
    _add_pipeline_options(p, schedule=False)
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("sample", help="run the sampler on a condition directory")
    p.add_argument("--conditions", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_options(p, codec=False, sampling=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sr", help="full super-resolution pipeline")
    p.add_argument("--input", required=True)
    p.add_argument("--segments")
    p.add_argument("--codec", help="codec file to use instead of fitting on the LR input")
    p.add_argument("--codec-source", dest="codec_source", choices=["lr", "hr"])
    p.add_argument("--sr-factor", dest="sr_factor", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--red-band", dest="red_band", type=int)
    p.add_argument("--nir-band", dest="nir_band", type=int)
    p.add_argument("--conditions-out", help="also write the condition set to this directory")
    p.add_argument("--out", required=True)
    _add_pipeline_options(p, sampling=True)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("metrics", help="full-reference metrics as CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--data-range", type=float, default=1.0)
    p.add_argument("--scale-ratio", type=float, default=4.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("loss", help="training-loss breakdown as CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--weights", default="0.8,0.1,0.1")
    p.add_argument("--sigma-data", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loss)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
