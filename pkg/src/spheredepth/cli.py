"""Command-line interface: ``spheredepth <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cddc import DEFAULT_BINS, DepthRange
from .distfit import FitConfig, fit_bins
from .errors import SphereDepthError
from .fusion_losses import BerhuMode, FusionWeights, LossConfig
from .io_formats import (
    load_config,
    read_grid,
    read_hdt,
    write_frequency_csv,
    write_grid,
    write_hdt,
    write_histogram_csv,
    write_index_png,
    write_mask_png,
    write_png16,
)
from .metrics import MetricReport, evaluate, evaluate_masked, format_table
from .pipeline import PipelineConfig, run_pipeline
from .resample import FusionWeighting, TangentPatchSet, coverage_count, extract_patches, geometric_fuse
from .sfa import build_index_map
from .sphere_geom import ErpGeometry, PatchLayout, layout_from_table, make_layout
from .synth import PRNG_NAME, oracle_direction_features, oracle_patch_vectors, render_depth, scene_from_config

CONFIG_ENV = "HRD_CONFIG"
MANIFEST = "layout.json"


def _base_config(args) -> dict:
    path = args.config or os.environ.get(CONFIG_ENV)
    return load_config(path) if path else {}


def _merged_config(args, overlay: str | None) -> dict:
    """Base config with the tables of ``overlay`` (a scene file) laid on top."""
    cfg = _base_config(args)
    if overlay:
        for key, table in load_config(overlay).items():
            if isinstance(table, dict):
                cfg.setdefault(key, {}).update(table)
            else:
                cfg[key] = table
    return cfg


def _layout(spec: str | None, cfg: dict, fov_deg: float | None, patch_size: int | None) -> PatchLayout:
    table = dict(cfg.get("layout", {}))
    if spec is not None:
        if spec.isdigit():
            table = {k: v for k, v in table.items() if k in ("fov_deg", "patch_size")}
            table["n"] = int(spec)
        else:
            table.update(load_config(spec).get("layout", {}))
    fov = math.radians(fov_deg if fov_deg is not None else float(table.get("fov_deg", 80.0)))
    size = patch_size if patch_size is not None else int(table.get("patch_size", 128))
    if "latitudes_deg" in table:
        return layout_from_table(table["latitudes_deg"], table["counts"], fov, size)
    return make_layout(int(table.get("n", 18)), fov, size)


def _loss_config(cfg: dict) -> LossConfig:
    t = cfg.get("loss", {})
    return LossConfig(
        lam=float(t.get("lambda", 0.1)),
        berhu_mode=BerhuMode(t.get("berhu_mode", "fixed")),
        berhu_c=float(t.get("berhu_c", 0.2)),
        chamfer_stride=int(t.get("chamfer_stride", 8)),
        reduction=t.get("reduction", "sum"),
    )


def _fit_config(cfg: dict, bins: int | None = None, **overrides) -> FitConfig:
    t = dict(cfg.get("fit", {}))
    t.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = {k: t[k] for k in ("steps", "lr", "tol", "growth", "max_halvings") if k in t}
    return FitConfig(bins=bins or int(cfg.get("cddc", {}).get("bins", DEFAULT_BINS)), **kwargs)


def _write_report_csv(path: Path, reports: dict[str, MetricReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + MetricReport.field_names())
        for name, rep in reports.items():
            writer.writerow([name] + [repr(v) if isinstance(v, float) else v for v in rep.as_dict().values()])


def cmd_project(args) -> None:
    cfg = _base_config(args)
    layout = _layout(args.layout, cfg, args.fov_deg, args.patch_size)
    src = read_grid(args.input, args.png_scale)
    geom = ErpGeometry.from_shape(src.shape)
    patches = extract_patches(src, layout, workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = ".pfm" if patches.channels in (1, 3) else ".hdt"
    files = []
    for n, patch in enumerate(patches.patches):
        name = f"patch_{n:03d}{ext}"
        write_grid(out / name, patch.astype(np.float32))
        files.append(name)
    manifest = layout.to_manifest()
    manifest.update(erp_height=geom.height, erp_width=geom.width, channels=patches.channels, files=files)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {layout.n} patches to {out}")


def cmd_backproject(args) -> None:
    src = Path(args.patches)
    manifest = json.loads((src / MANIFEST).read_text())
    layout = PatchLayout.from_manifest(manifest)
    files = manifest.get("files") or sorted(p.name for p in src.glob("patch_*"))
    if len(files) != layout.n:
        raise SphereDepthError(f"manifest lists {layout.n} centers but {len(files)} patch files")
    stack = np.stack([read_grid(src / f) for f in files])
    try:
        patches = TangentPatchSet(layout, stack)
    except ValueError as exc:
        raise SphereDepthError(f"manifest mismatch: {exc}") from None
    height = args.height or int(manifest["erp_height"])
    geom = ErpGeometry.from_height(height)
    fused = geometric_fuse(patches, geom, FusionWeighting(args.weighting), workers=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_grid(out, fused.astype(np.float32))
    write_mask_png(out.with_name(out.stem + "_coverage.png"), coverage_count(layout, geom) > 0)
    print(f"fused {layout.n} patches into {geom.height}x{geom.width} -> {out}")


def cmd_pipeline(args) -> None:
    cfg = _merged_config(args, args.scene)
    scene_table = dict(cfg.get("scene", {}))
    if args.seed is not None:
        scene_table["seed"] = args.seed
    layout = _layout(None, cfg, None, None)
    spec = scene_from_config(scene_table, cfg.get("layout", {}))
    height = args.height or int(cfg.get("erp", {}).get("height", 256))
    geom = ErpGeometry.from_height(height)
    cddc = cfg.get("cddc", {})
    fusion = cfg.get("fusion", {})
    bins = args.bins or int(cddc.get("bins", DEFAULT_BINS))
    pcfg = PipelineConfig(
        bins=bins,
        epsilon=float(cddc.get("epsilon", 1e-3)),
        mode=args.mode,
        holistic_bins=cddc.get("holistic_bins", "uniform"),
        c1=int(cddc.get("c1", 64)),
        c2=int(cddc.get("c2", 32)),
        fusion=FusionWeights(float(fusion.get("raw0", 0.0)), float(fusion.get("raw1", 0.0))),
        loss=_loss_config(cfg),
        fit=_fit_config(cfg, bins),
    )
    result = run_pipeline(spec, geom, layout, pcfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_grid(out / "gt.pfm", result.gt.astype(np.float32))
    write_grid(out / "depth_holistic.pfm", result.holistic.astype(np.float32))
    write_grid(out / "depth_regional.pfm", result.regional.astype(np.float32))
    write_grid(out / "depth_fused.pfm", result.fused.astype(np.float32))
    write_index_png(out / "index_map.png", result.index_map)
    write_hdt(out / "index_map.hdt", result.index_map.assignment.astype(np.uint32))
    write_frequency_csv(out / "index_freq.csv", result.index_map.histogram())
    write_histogram_csv(out / "histogram_holistic.csv", result.holistic_hist)
    _write_report_csv(out / "metrics.csv", result.reports)
    summary = {
        "seed": result.seed,
        "prng": result.prng,
        "mode": args.mode,
        "erp": [geom.height, geom.width],
        "layout": layout.to_manifest(),
        "bins": bins,
        "total_loss": result.loss,
        "fusion_weights": list(pcfg.fusion.effective()),
    }
    if result.interior is not None:
        err = np.abs(result.regional - result.gt)[result.interior]
        # tiny grids can have no pixel far enough from every cell border
        summary["regional_interior_max_abs_error"] = float(err.max()) if err.size else None
        summary["interior_fraction"] = float(result.interior.mean())
    (out / "run.json").write_text(json.dumps(summary, indent=2) + "\n")
    for name, rep in result.reports.items():
        print(f"[{name}]")
        print(format_table(rep))


def cmd_eval(args) -> None:
    pred = read_grid(args.pred, args.png_scale)
    gt = read_grid(args.gt, args.png_scale)
    if pred.ndim == 3:
        pred = pred[..., 0]
    if gt.ndim == 3:
        gt = gt[..., 0]
    clamp = None
    if args.dmin is not None or args.dmax is not None:
        clamp = DepthRange(args.dmin if args.dmin is not None else 0.0, args.dmax if args.dmax is not None else math.inf)
    if args.mask_frac:
        report = evaluate_masked(pred, gt, args.mask_frac, args.mask_frac, clamp)
    else:
        report = evaluate(pred, gt, clamp)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        _write_report_csv(Path(args.out), {"eval": report})
    print(format_table(report))


def _read_samples(path) -> np.ndarray:
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                continue  # header line
    return np.asarray(values, dtype=np.float64)


def _loss_curve_svg(path: Path, losses) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "spheredepth"
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(len(losses)), losses)
    ax.set_xlabel("accepted iteration")
    ax.set_ylabel("Chamfer loss")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_binfit(args) -> None:
    cfg = _base_config(args)
    lo, hi = (float(v) for v in args.range.split(","))
    depth_range = DepthRange(lo, hi)
    samples = _read_samples(args.samples)
    fit_cfg = _fit_config(cfg, args.bins, steps=args.steps, lr=args.lr, tol=args.tol)
    trace = fit_bins(samples, depth_range, fit_cfg, seed=args.seed or 0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "step_size"])
        for i, (loss, step) in enumerate(zip(trace.losses, trace.step_sizes)):
            writer.writerow([i, repr(loss), repr(step)])
    write_histogram_csv(out.with_name(out.stem + "_histogram.csv"), trace.histogram)
    _loss_curve_svg(out.with_name(out.stem + "_loss.svg"), trace.losses)
    print(
        f"bins={fit_cfg.bins} iterations={len(trace.losses) - 1} "
        f"loss {trace.initial_loss:.6g} -> {trace.final_loss:.6g} "
        f"({trace.final_loss / trace.initial_loss:.2%} of initial) seed={trace.seed} prng={PRNG_NAME}"
    )


def cmd_indexmap(args) -> None:
    cfg = _base_config(args)
    if args.features:
        features = read_hdt(args.features).astype(np.float64)
        vectors = read_hdt(args.vectors).astype(np.float64)
    else:
        layout = _layout(args.layout, cfg, None, None)
        features = oracle_direction_features(ErpGeometry.from_height(args.height))
        vectors = oracle_patch_vectors(layout)
    index_map = build_index_map(features, vectors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_index_png(out / "index_map.png", index_map)
    write_hdt(out / "index_map.hdt", index_map.assignment.astype(np.uint32))
    write_frequency_csv(out / "index_freq.csv", index_map.histogram())
    print(f"index map {index_map.shape[0]}x{index_map.shape[1]} over {index_map.n_patches} patches -> {out}")


def cmd_synth(args) -> None:
    cfg = _merged_config(args, args.scene)
    scene_table = dict(cfg.get("scene", {}))
    if args.seed is not None:
        scene_table["seed"] = args.seed
    spec = scene_from_config(scene_table, cfg.get("layout", {}))
    height = args.height or int(cfg.get("erp", {}).get("height", 256))
    depth = render_depth(spec, ErpGeometry.from_height(height))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".png":
        write_png16(out, depth, args.png_scale)
    else:
        write_grid(out, depth.astype(np.float32))
    print(f"rendered {type(spec.scene).__name__} at {height}x{2 * height} -> {out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"TOML config file (default: ${CONFIG_ENV})")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")

    parser = argparse.ArgumentParser(prog="spheredepth", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", parents=[common], help="sample tangent patches from an ERP image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--layout", default=None, help="18, 26, or a TOML file with a [layout] table")
    p.add_argument("--fov-deg", type=float, default=None)
    p.add_argument("--patch-size", type=int, default=None)
    p.add_argument("--png-scale", type=float, default=0.001, help="meters per unit for 16-bit PNG input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("backproject", parents=[common], help="geometric fusion of patches back to ERP")
    p.add_argument("--patches", required=True)
    p.add_argument("--weighting", choices=["cosine", "uniform"], default="cosine")
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backproject)

    p = sub.add_parser("pipeline", parents=[common], help="run the oracle pipeline on a synthetic scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--mode", choices=["oracle", "random"], default="oracle")
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", parents=[common], help="depth metrics of a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask-frac", type=float, default=0.0)
    p.add_argument("--dmin", type=float, default=None)
    p.add_argument("--dmax", type=float, default=None)
    p.add_argument("--png-scale", type=float, default=0.001)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("binfit", parents=[common], help="fit histogram bins to depth samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--range", default="0,10")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_binfit)

    p = sub.add_parser("indexmap", parents=[common], help="build and dump a patch index map")
    p.add_argument("--layout", default=None)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--features", default=None, help="HDT (h, w, C) feature map")
    p.add_argument("--vectors", default=None, help="HDT (N, C) patch vectors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_indexmap)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic ground-truth depth map")
    p.add_argument("--scene", default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--png-scale", type=float, default=0.001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "indexmap" and bool(args.features) != bool(args.vectors):
        parser.error("--features and --vectors must be given together")
    try:
        args.func(args)
    except (SphereDepthError, ValueError, OSError, KeyError) as exc:
        print(f"spheredepth {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
