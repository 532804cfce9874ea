"""Batch command-line entry point for every desk-scale experiment.

Exit codes: 0 success, 2 validation error, 3 runtime error. All stochastic
commands require an explicit seed (never wall-clock) so outputs are
byte-identical across re-runs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments, planner
from .drr import build_phantom, generate_orbit, raycast_drr
from .errors import CupPlanError
from .scene import (
    PAPER_DETECTOR,
    CArmGeometry,
    bb_phantom_spec,
    default_app_frame,
)
from .track import MarkerNoise


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_rows_csv(path: Path, rows: list) -> None:
    """Dataclass rows to CSV with stable field order and float formatting."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        if rows:
            fields = [fld.name for fld in dataclasses.fields(rows[0])]
            writer.writerow(fields)
            for row in rows:
                writer.writerow([_fmt(getattr(row, name)) for name in fields])


def write_summary(path: Path, summary: dict) -> None:
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def parse_range(spec: str) -> list[float]:
    """start:end:step, degrees, inclusive ends when step divides the range."""
    from .drr import angle_sequence

    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"range must be start:end:step, got {spec!r}")
    start, end, step = (float(p) for p in parts)
    return [float(a) for a in angle_sequence(start, end, step)]


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("CUPPLAN_OUT") or "."
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _geometry(args) -> CArmGeometry:
    if getattr(args, "paper_detector", False):
        return PAPER_DETECTOR
    kw = {}
    if getattr(args, "detector_px", None):
        kw["detector_px"] = args.detector_px
    if getattr(args, "pixel_spacing", None):
        kw["pixel_spacing_mm"] = args.pixel_spacing
    return CArmGeometry(**kw)


def _seeds(args) -> list[int]:
    return list(range(args.seed, args.seed + args.seeds))


# ---------------------------------------------------------------------------
# subcommands


def cmd_calib_sim(args) -> int:
    out = _out_dir(args)
    rows = experiments.calib_study(
        n_poses=args.poses,
        noise_3d_mm=args.noise_3d,
        noise_px=args.noise_px,
        seeds=_seeds(args),
    )
    write_rows_csv(out / "calib_sim.csv", rows)
    write_summary(
        out / "calib_sim.json",
        {
            "n_poses": args.poses,
            "noise_3d_mm": args.noise_3d,
            "rms_residual_mm_mean": float(np.mean([r.rms_residual_mm for r in rows])),
            "rotation_error_deg_mean": float(np.mean([r.rotation_error_deg for r in rows])),
            "translation_error_mm_mean": float(np.mean([r.translation_error_mm for r in rows])),
        },
    )
    return 0


def cmd_track_sweep(args) -> int:
    out = _out_dir(args)
    angles = parse_range(args.angles)
    rows = experiments.track_sweep(
        angles_deg=angles,
        noise=MarkerNoise(rot_deg_sigma=args.noise_rot, trans_mm_sigma=args.noise_trans),
        seeds=_seeds(args),
        axis=args.axis,
    )
    write_rows_csv(out / "track_sweep.csv", rows)
    write_summary(
        out / "track_sweep.json",
        {
            "angles": angles,
            "rotation_err_deg_mean": float(np.mean([r.rotation_err_deg for r in rows])),
            "translation_err_mm_mean": float(np.mean([r.translation_err_mm for r in rows])),
        },
    )
    return 0


def cmd_phantom(args) -> int:
    out = _out_dir(args)
    app = default_app_frame(_geometry(args))
    spec = bb_phantom_spec(app)
    vol = build_phantom(spec, dims=(args.dims,) * 3, spacing=args.spacing)
    vol.save(out / "phantom.json")
    write_summary(
        out / "phantom_summary.json",
        {
            "dims": list(vol.dims),
            "spacing_mm": vol.spacing.tolist(),
            "nonzero_voxels": int(np.count_nonzero(vol.data)),
            "n_bbs": len(spec.bbs),
        },
    )
    return 0


def cmd_drr(args) -> int:
    out = _out_dir(args)
    geometry = _geometry(args)
    app = default_app_frame(geometry)
    spec = bb_phantom_spec(app)
    vol = build_phantom(spec, dims=(args.dims,) * 3, spacing=args.spacing)
    base = geometry.ap_camera()
    if args.orbit:
        start, end, step = (float(p) for p in args.orbit.split(":"))
        cams = generate_orbit(base, args.axis, start, end, step, geometry.iso_center())
        angles = [start + i * step for i in range(len(cams))]
    else:
        cams = [base]
        angles = [0.0]
    manifest = []
    for i, (cam, angle) in enumerate(zip(cams, angles)):
        img = raycast_drr(vol, cam)
        stem = f"drr_{i:03d}"
        img.save_pgm(out / f"{stem}.pgm")
        img.save_png(out / f"{stem}.png")
        (out / f"{stem}_camera.json").write_text(json.dumps(cam.to_json_dict(), indent=2))
        manifest.append(
            {
                "station_id": cam.pose.to_frame,
                "angle_deg": angle,
                "camera": f"{stem}_camera.json",
                "image": f"{stem}.png",
            }
        )
    with open(out / "orbit_manifest.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["station_id", "angle_deg", "camera", "image"])
        for m in manifest:
            writer.writerow([m["station_id"], _fmt(m["angle_deg"]), m["camera"], m["image"]])
    write_summary(out / "drr_summary.json", {"n_images": len(cams)})
    return 0


def cmd_epipolar_study(args) -> int:
    out = _out_dir(args)
    rows = experiments.epipolar_study(
        noise=MarkerNoise(rot_deg_sigma=args.noise_rot, trans_mm_sigma=args.noise_trans),
        seeds=_seeds(args),
    )
    write_rows_csv(out / "epipolar_study.csv", rows)
    write_summary(out / "epipolar_study.json", experiments.epipolar_summary(rows))
    return 0


def cmd_plan_sweep(args) -> int:
    out = _out_dir(args)
    angles = parse_range(args.angles)
    rows = planner.separation_sweep(
        separations_deg=angles,
        seeds=_seeds(args),
        mode=args.mode,
        preset=args.preset,
        perturbation_mm=args.perturbation,
        budget=args.budget,
    )
    write_rows_csv(out / "plan_sweep.csv", rows)
    write_summary(
        out / "plan_sweep.json",
        {
            "mode": args.mode,
            "preset": args.preset,
            "mean_translation_mm": [r.mean_translation_mm for r in rows],
            "separations_deg": [r.separation_deg for r in rows],
        },
    )
    return 0


def cmd_ar_study(args) -> int:
    out = _out_dir(args)
    rows = experiments.ar_study(
        n_poses=args.poses, depth_sigma_mm=args.depth_noise, seed=args.seed
    )
    write_rows_csv(out / "ar_study.csv", rows)
    axis = [r.axis_deg for r in rows]
    write_summary(
        out / "ar_study.json",
        {
            "n_poses": args.poses,
            "axis_deg_mean": float(np.mean(axis)),
            "axis_deg_std": float(np.std(axis)),
            "tip_mm_mean": float(np.mean([r.tip_mm for r in rows])),
        },
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cupplan", description="Two-view cup planning and AR alignment experiments"
    )
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, stochastic=True):
        p.add_argument("--out", help="output directory (default $CUPPLAN_OUT or .)")
        if stochastic:
            p.add_argument("--seed", type=int, default=0, help="base seed")
            p.add_argument("--seeds", type=int, default=1, help="number of seeds")

    p = sub.add_parser("calib-sim", help="synthetic co-calibration study")
    common(p)
    p.add_argument("--poses", type=int, default=22)
    p.add_argument("--noise-3d", type=float, default=0.5)
    p.add_argument("--noise-px", type=float, default=0.5)
    p.set_defaults(func=cmd_calib_sim)

    p = sub.add_parser("track-sweep", help="marker-noise sweep of relative C-arm pose")
    common(p)
    p.add_argument("--angles", default="-40:40:10")
    p.add_argument("--axis", choices=["orbital", "cranial"], default="orbital")
    p.add_argument("--noise-rot", type=float, default=0.12)
    p.add_argument("--noise-trans", type=float, default=0.6)
    p.set_defaults(func=cmd_track_sweep)

    p = sub.add_parser("phantom", help="build and save the bb phantom volume")
    common(p, stochastic=False)
    p.add_argument("--dims", type=int, default=256)
    p.add_argument("--spacing", type=float, default=1.0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("drr", help="render a single DRR or an orbit series")
    common(p, stochastic=False)
    p.add_argument("--orbit", help="start:end:step degrees")
    p.add_argument("--axis", choices=["orbital", "cranial"], default="orbital")
    p.add_argument("--dims", type=int, default=256)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--detector-px", type=int)
    p.add_argument("--pixel-spacing", type=float)
    p.set_defaults(func=cmd_drr)

    p = sub.add_parser("epipolar-study", help="bb epipolar / triangulation experiment")
    common(p)
    p.add_argument("--noise-rot", type=float, default=0.12)
    p.add_argument("--noise-trans", type=float, default=0.6)
    p.set_defaults(func=cmd_epipolar_study)

    p = sub.add_parser("plan-sweep", help="oracle planning over view separations")
    common(p)
    p.add_argument("--angles", default="4.5:45:4.5")
    p.add_argument("--mode", choices=["translation_only", "full_6dof"], default="translation_only")
    p.add_argument("--preset", action="store_true")
    p.add_argument("--perturbation", type=float, default=10.0)
    p.add_argument("--budget", type=int, default=400)
    p.set_defaults(func=cmd_plan_sweep)

    p = sub.add_parser("ar-study", help="AR axis-error study over random poses")
    common(p)
    p.add_argument("--poses", type=int, default=10)
    p.add_argument("--depth-noise", type=float, default=1.0)
    p.set_defaults(func=cmd_ar_study)

    p = sub.add_parser("serve", help="start the planning/AR HTTP service")
    common(p, stochastic=False)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pull --config out of argv and turn file entries into defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    cfg = json.loads(Path(path).read_text())
    argv = argv[:i] + argv[i + 2 :]
    extra: list[str] = []
    for key, value in cfg.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flag wins
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra += [flag, str(value)]
    # config-derived flags precede explicit flags
    return extra + argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and not argv[0].startswith("-"):
            tail = _apply_config(parser, argv[1:])
            argv = argv[:1] + tail
    except json.JSONDecodeError as e:
        print(f"error: bad config file: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    from .errors import BadRange

    try:
        return args.func(args)
    except (ValueError, BadRange, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CupPlanError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # pragma: no cover - defensive
        print(f"runtime error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
