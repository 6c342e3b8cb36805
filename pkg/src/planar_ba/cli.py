"""Command-line front end: gen / perturb / render / optimize / features / eval / report.

Every command writes a ``manifest.json`` into its output root recording the
resolved configuration and master seed; rerunning with the same manifest
reproduces all artifacts byte-identically (timings aside).  Exit codes:
0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .column_ba import compute_adjustment_field
from .conditioning import projected_stats, write_stats_csv
from .evaluation import compute_stats, evaluate_floor
from .optimizer import OptimizerConfig, optimize
from .renderer import ImageGeometry
from .reporting import boundary_overlay_svg, layout_triptych_svg
from .scene import Scene, SceneError, load_scene, save_scene
from .simulation import (
    FloorplanConfig,
    NoiseConfig,
    floor_dir,
    generate_floorplan,
    perturb_boundaries,
    perturb_scene,
    read_boundaries,
    sample_cameras,
    write_boundaries,
)

log = logging.getLogger("planar_ba")


def _derive_seed(master: int, *keys: int) -> int:
    """Stable 63-bit child seed for one entity of one floor."""
    ss = np.random.SeedSequence([int(master), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def _setup_logging():
    level = os.environ.get("PLANAR_BA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config_file(path: str) -> dict:
    p = Path(path)
    text = p.read_text()
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    timings: dict) -> None:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "config") and not k.startswith("_")}
    manifest = {
        "command": command,
        "config": config,
        "seed": args.seed,
        "version": __version__,
        "timings": timings,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


def _floor_dirs(dataset: Path) -> list[Path]:
    root = dataset / "floors"
    if not root.is_dir():
        raise SceneError(f"{dataset} has no floors/ directory")
    return sorted(root.iterdir(), key=lambda p: int(p.name))


def _run_parallel(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _geom(args) -> ImageGeometry:
    return ImageGeometry(args.width, args.width // 2)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def _gen_one_floor(task: dict) -> str:
    fseed = task["floor_seed"]
    cfg = FloorplanConfig(rooms_min=task["rooms_min"], rooms_max=task["rooms_max"])
    scene = generate_floorplan(fseed, cfg)
    cams = sample_cameras(scene, task["imgs_per_room"], fseed)
    scene = Scene(rooms=scene.rooms, cameras=cams, doors=scene.doors,
                  norm_transform=scene.norm_transform, walls=scene.walls)
    out = floor_dir(task["out"], fseed)
    out.mkdir(parents=True, exist_ok=True)
    save_scene(scene, out / "gt.json")
    save_scene(scene, out / "scene.json")
    geom = ImageGeometry(task["width"], task["width"] // 2)
    noise = NoiseConfig(boundary_chance=task["noise_chance"],
                        boundary_max_scale=task["noise_scale"])
    render_seed = task["render_seed"]
    pairs = [perturb_boundaries(scene, c, geom, noise, render_seed)
             for c in scene.cameras]
    write_boundaries(out, pairs)
    return out.name


def cmd_gen(args) -> int:
    t0 = time.time()
    out = Path(args.out)
    tasks = []
    for i in range(args.floors):
        fseed = args.seed + i
        tasks.append({
            "floor_seed": fseed,
            "out": str(out),
            "imgs_per_room": args.imgs_per_room,
            "rooms_min": args.rooms_min,
            "rooms_max": args.rooms_max,
            "width": args.width,
            "noise_chance": args.noise_chance,
            "noise_scale": args.noise_scale,
            "render_seed": _derive_seed(args.seed, fseed, 1),
        })
    done = _run_parallel(_gen_one_floor, tasks, args.jobs)
    log.info("generated %d floors in %s", len(done), out)
    _write_manifest(out, "gen", args, {"wall_clock_s": time.time() - t0})
    return 0


# ---------------------------------------------------------------------------
# perturb
# ---------------------------------------------------------------------------

def cmd_perturb(args) -> int:
    t0 = time.time()
    dataset = Path(args.dataset)
    for fdir in _floor_dirs(dataset):
        gt = load_scene(fdir / "gt.json")
        noisy = perturb_scene(gt, args.sigma, _derive_seed(args.seed, int(fdir.name), 2))
        save_scene(noisy, fdir / "scene.json")
    _write_manifest(dataset, "perturb", args, {"wall_clock_s": time.time() - t0})
    return 0


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def cmd_render(args) -> int:
    t0 = time.time()
    dataset = Path(args.dataset)
    geom = _geom(args)
    noise = NoiseConfig(boundary_chance=args.noise_chance,
                        boundary_max_scale=args.noise_scale)
    for fdir in _floor_dirs(dataset):
        gt = load_scene(fdir / "gt.json")
        seed = _derive_seed(args.seed, int(fdir.name), 1)
        pairs = [perturb_boundaries(gt, c, geom, noise, seed) for c in gt.cameras]
        write_boundaries(fdir, pairs)
    _write_manifest(dataset, "render", args, {"wall_clock_s": time.time() - t0})
    return 0


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

def _optimize_one_floor(task: dict) -> str:
    fdir = Path(task["fdir"])
    scene = load_scene(fdir / "scene.json")
    pairs = read_boundaries(fdir)
    boundaries = [p[0] for p in pairs]
    assignments = [p[1] for p in pairs]
    geom = ImageGeometry(task["width"], task["width"] // 2)
    config = OptimizerConfig(iterations=task["iterations"],
                             step_scale=task["step_scale"],
                             lm_damping=task["damping"],
                             convergence_tol=task["tol"])
    refined, trace = optimize(scene, boundaries, assignments, geom, config)
    save_scene(refined, fdir / "optimized.json")
    trace.write_csv(fdir / "trace.csv")
    return fdir.name


def cmd_optimize(args) -> int:
    t0 = time.time()
    dataset = Path(args.dataset)
    tasks = [{"fdir": str(fdir), "width": args.width,
              "iterations": args.iterations, "step_scale": args.step_scale,
              "damping": args.damping, "tol": args.tol}
             for fdir in _floor_dirs(dataset)]
    done = _run_parallel(_optimize_one_floor, tasks, args.jobs)
    log.info("optimized %d floors", len(done))
    _write_manifest(dataset, "optimize", args, {"wall_clock_s": time.time() - t0})
    return 0


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def cmd_features(args) -> int:
    t0 = time.time()
    dataset = Path(args.dataset)
    geom = _geom(args)
    for fdir in _floor_dirs(dataset):
        scene = load_scene(fdir / args.state)
        pairs = read_boundaries(fdir)
        field = compute_adjustment_field(scene, [p[0] for p in pairs],
                                         [p[1] for p in pairs], geom)
        write_stats_csv(projected_stats(field, scene), fdir / "features.csv")
    _write_manifest(dataset, "features", args, {"wall_clock_s": time.time() - t0})
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _stats_row(stats) -> dict:
    return {"mean": stats.mean, "median": stats.median, "std": stats.std,
            "p90": stats.p90, "count": stats.count}


def cmd_eval(args) -> int:
    t0 = time.time()
    pred_root = Path(args.pred)
    gt_root = Path(args.gt) if args.gt else pred_root
    geom = _geom(args)
    missing = []
    per_floor_rows = []
    pooled = {}
    for gdir in _floor_dirs(gt_root):
        pdir = floor_dir(pred_root, int(gdir.name))
        if not pdir.is_dir():
            missing.append(gdir.name)
            continue
        gt = load_scene(gdir / "gt.json")
        pairs = read_boundaries(gdir)
        boundaries = [p[0] for p in pairs]
        assignments = [p[1] for p in pairs]
        states = {"start": pdir / "scene.json"}
        if (pdir / "optimized.json").is_file():
            states["optimized"] = pdir / "optimized.json"
        seed = _derive_seed(args.seed, int(gdir.name), 3)
        for state, path in states.items():
            ev = evaluate_floor(load_scene(path), gt, boundaries, assignments,
                                geom, seed=seed)
            rows = {
                f"{state}_pose_translation": (ev.pose.translation_pct, "%"),
                f"{state}_pose_rotation": (ev.pose.rotation_deg, "deg"),
                f"{state}_layout_offset": (ev.layout.offset_pct, "%"),
                f"{state}_layout_vertex": (ev.layout.vertex_pct, "%"),
                f"{state}_reprojection": (ev.reprojection, "px"),
            }
            for metric, (stats, unit) in rows.items():
                per_floor_rows.append([gdir.name, metric, unit, stats.mean,
                                       stats.median, stats.std, stats.p90])
            buckets = pooled.setdefault(state, {"pose": [], "rot": [],
                                                "layout": [], "reproj": []})
            buckets["pose"].append(ev.pose.per_camera_distance * 100.0)
            buckets["rot"].append(np.degrees(ev.pose.per_camera_rotation))
            buckets["layout"].append(ev.layout.per_wall_offset * 100.0)
            buckets["reproj"].append(ev.reprojection_per_column)
    if missing:
        for name in missing:
            log.error("missing floor in predictions: %s", name)
        print("eval: missing floors in predictions: " + ", ".join(missing),
              file=sys.stderr)
        return 1

    out_dir = Path(args.out) if args.out else pred_root
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "metrics.csv").open("w") as f:
        f.write("floor,metric,unit,mean,median,std,p90\n")
        for row in per_floor_rows:
            f.write(",".join([row[0], row[1], row[2]]
                             + [repr(float(x)) for x in row[3:]]) + "\n")
    summary = {}
    for state, buckets in pooled.items():
        summary[state] = {
            "pose_translation_pct": _stats_row(compute_stats(np.concatenate(buckets["pose"]), "%")),
            "pose_rotation_deg": _stats_row(compute_stats(np.concatenate(buckets["rot"]), "deg")),
            "visible_layout_pct": _stats_row(compute_stats(np.concatenate(buckets["layout"]), "%")),
            "reprojection_px": _stats_row(compute_stats(np.concatenate(buckets["reproj"]), "px")),
        }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=1, sort_keys=True) + "\n")
    for state in sorted(summary):
        row = summary[state]
        print(f"{state}: pose {row['pose_translation_pct']['mean']:.3f}% "
              f"layout {row['visible_layout_pct']['mean']:.3f}% "
              f"reproj {row['reprojection_px']['mean']:.3f}px")
    _write_manifest(out_dir, "eval", args, {"wall_clock_s": time.time() - t0})
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args) -> int:
    t0 = time.time()
    fdir = Path(args.floor)
    if not (fdir / "gt.json").is_file():
        raise SceneError(f"{fdir} is not a floor directory (no gt.json)")
    geom = _geom(args)
    panels = []
    if (fdir / "scene.json").is_file():
        panels.append(("before", load_scene(fdir / "scene.json")))
    if (fdir / "optimized.json").is_file():
        panels.append(("after", load_scene(fdir / "optimized.json")))
    gt = load_scene(fdir / "gt.json")
    panels.append(("ground truth", gt))
    out = fdir / "report"
    out.mkdir(parents=True, exist_ok=True)
    layout_triptych_svg(panels, out / "layout.svg")
    overlay_scene = panels[-2][1] if len(panels) > 1 else gt
    for boundary, assignment in read_boundaries(fdir):
        boundary_overlay_svg(overlay_scene, boundary, assignment, geom,
                             out / f"camera_{boundary.camera_id}.svg")
    _write_manifest(out, "report", args, {"wall_clock_s": time.time() - t0})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planar-ba",
        description="Planar bundle adjustment for floor-plan layouts and camera positions.")
    parser.add_argument("--version", action="version", version=__version__)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel floor workers")
    common.add_argument("--config", type=str, default=None,
                        help="JSON or TOML file with flag defaults")
    common.add_argument("--width", type=int, default=512,
                        help="panorama width in columns (height is width/2)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--floors", type=int, default=10)
    p.add_argument("--imgs-per-room", type=float, default=1.0, dest="imgs_per_room")
    p.add_argument("--rooms-min", type=int, default=4, dest="rooms_min")
    p.add_argument("--rooms-max", type=int, default=8, dest="rooms_max")
    p.add_argument("--noise-chance", type=float, default=0.0, dest="noise_chance")
    p.add_argument("--noise-scale", type=float, default=0.0, dest="noise_scale")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("perturb", parents=[common],
                       help="write noisy start scenes from ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sigma", type=float, default=0.033)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("render", parents=[common],
                       help="re-render boundaries, optionally with wall noise")
    p.add_argument("--dataset", required=True)
    p.add_argument("--noise-chance", type=float, default=0.0, dest="noise_chance")
    p.add_argument("--noise-scale", type=float, default=0.0, dest="noise_scale")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("optimize", parents=[common], help="run the refinement loop")
    p.add_argument("--dataset", required=True)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--step-scale", type=float, default=2.5, dest="step_scale")
    p.add_argument("--damping", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("features", parents=[common],
                       help="dump per-(camera, wall) conditioning statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--state", default="scene.json",
                   help="scene file per floor to compute features at")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("eval", parents=[common], help="metrics against ground truth")
    p.add_argument("--pred", required=True, help="dataset with predicted scenes")
    p.add_argument("--gt", default=None,
                   help="dataset with ground truth (defaults to --pred)")
    p.add_argument("--out", default=None, help="output directory for metrics")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="SVG report for one floor")
    p.add_argument("--floor", required=True, help="floor directory")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config_defaults(argv: list[str], parser: argparse.ArgumentParser):
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    data = _load_config_file(path)
    for action in parser._subparsers._group_actions[0].choices.values():
        known = {a.dest for a in action._actions}
        section = dict(data)
        for key in list(section):
            if isinstance(section[key], dict):
                section.pop(key)
        for name, sub_cfg in data.items():
            if isinstance(sub_cfg, dict):
                if name == getattr(action, "prog", "").split()[-1]:
                    section.update(sub_cfg)
        action.set_defaults(**{k: v for k, v in section.items() if k in known})


def main(argv=None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        _apply_config_defaults(argv, parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except SceneError as e:
        log.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        log.error("%s", e)
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
