"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 training infeasible, 4 model/data
mismatch.

A SCENE argument is either a directory holding ``scene.hdr`` (plus optional
``white.hdr``, ``dark.hdr`` and ``labels.csv``, the layout ``synth`` writes)
or a cube header, in which case ``--white/--dark/--labels`` supply the rest.
Option precedence is command-line flag, then ``--config`` JSON file, then the
built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .cube import (CalibrationRefs, CubeFormatError, DegenerateReferenceError, calibrate,
                   crop_bands, load_cube, save_cube, savgol_smooth)
from .maturity import ModelFormatError, SingleClassError, load_model, save_model
from .pipeline import (LabelError, PipelineConfig, Scene, classify_regions, preprocess,
                       segment, train_model)
from .reports import write_evaluation, write_predictions_csv, write_threshold_csv
from .segmentation import NoRegionsError, write_regions_pgm, write_rgb_ppm
from .synthgen import LayoutError, SeparationError, make_scene, scene_spec_from_dict, write_scene
from .unmixing import (DEFAULT_GROUPING, AxisMismatchError, EmptyClassError,
                       write_proportion_csv, write_proportion_maps)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRAINING = 3
EXIT_MISMATCH = 4

DEFAULTS = {
    "band_range": (650.0, 1000.0),
    "sg_order": 4,
    "sg_width": 25,
    "seed": 0,
    "foreground": "minority",
    "min_area": 50,
    "connectivity": 8,
    "group": dict(DEFAULT_GROUPING),
    "tau": None,
    "roi": None,
    "reflectivity": 0.99,
    "aggregate": "mean",
}


class InputError(Exception):
    pass


def parse_band_range(text) -> tuple:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        try:
            lo, hi = str(text).split(":")
        except ValueError:
            raise InputError(f"band range must look like LO:HI, got {text!r}") from None
    try:
        lo, hi = float(lo), float(hi)
    except ValueError:
        raise InputError(f"band range must be numeric, got {text!r}") from None
    if not lo < hi:
        raise InputError(f"band range {lo}:{hi} is empty")
    return lo, hi


def parse_grouping(text) -> dict:
    if isinstance(text, dict):
        return {str(k): str(v) for k, v in text.items()}
    grouping = {}
    for item in str(text).split(","):
        if not item.strip():
            continue
        try:
            label, cls = item.split("=")
        except ValueError:
            raise InputError(f"group entries must be label=class, got {item!r}") from None
        grouping[label.strip()] = cls.strip()
    # class names always map to themselves
    for cls in set(grouping.values()):
        grouping.setdefault(cls, cls)
    return grouping


def parse_roi(text):
    if text is None or isinstance(text, (list, tuple)):
        return None if text is None else tuple(int(v) for v in text)
    try:
        x0, y0, x1, y1 = (int(v) for v in str(text).split(","))
    except ValueError:
        raise InputError(f"roi must be X0,Y0,X1,Y1, got {text!r}") from None
    return x0, y0, x1, y1


def resolve_options(args) -> dict:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
        opts.update(data)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    opts["band_range"] = parse_band_range(opts["band_range"])
    opts["group"] = parse_grouping(opts["group"])
    opts["roi"] = parse_roi(opts["roi"])
    return opts


def pipeline_config(opts) -> PipelineConfig:
    return PipelineConfig(
        band_range=opts["band_range"], sg_order=int(opts["sg_order"]),
        sg_width=int(opts["sg_width"]), seed=int(opts["seed"]),
        foreground=opts["foreground"], min_region_area=int(opts["min_area"]),
        connectivity=int(opts["connectivity"]), grouping=opts["group"],
        roi=opts["roi"], aggregate=opts["aggregate"],
        tau=None if opts["tau"] is None else float(opts["tau"]))


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def read_labels(path):
    labels, groups = {}, {}
    with open(_require(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"region_id", "color_label"} <= set(reader.fieldnames):
            raise InputError(f"{path}: labels CSV needs region_id and color_label columns")
        for row in reader:
            rid = int(row["region_id"])
            labels[rid] = row["color_label"].strip()
            if row.get("cultivar"):
                groups[rid] = row["cultivar"].strip()
    return labels, groups


def sidecar_path(header) -> Path:
    return Path(header).with_suffix(".json")


def _load_refs(white, dark, reflectivity):
    w = load_cube(_require(white))
    d = load_cube(_require(dark))
    return CalibrationRefs(w.values, d.values, reflectivity)


def load_scenes(args, opts, with_labels=True) -> list:
    scenes = []
    label_files = list(getattr(args, "labels", None) or [])
    if label_files and len(label_files) != len(args.scenes):
        raise InputError("give one --labels file per scene")
    for i, item in enumerate(args.scenes):
        item = Path(item)
        refs = labels = groups = None
        if item.is_dir():
            header = _require(item / "scene.hdr")
            name = item.name
            if (item / "white.hdr").exists() and (item / "dark.hdr").exists():
                refs = (item / "white.hdr", item / "dark.hdr")
            label_path = item / "labels.csv"
        else:
            header = _require(item)
            name = header.stem
            label_path = None
        if getattr(args, "white", None) or getattr(args, "dark", None):
            if not (args.white and args.dark):
                raise InputError("--white and --dark must be given together")
            refs = (args.white, args.dark)
        if label_files:
            label_path = Path(label_files[i])
            _require(label_path)
        cube = load_cube(header)
        smoothed = False
        side = sidecar_path(header)
        if side.exists():
            meta = json.loads(side.read_text(encoding="utf-8"))
            smoothed = "savgol" in meta
            if meta.get("calibrated"):
                refs = None
        if refs is not None:
            refs = _load_refs(refs[0], refs[1], float(opts["reflectivity"]))
        if with_labels and label_path is not None and label_path.exists():
            labels, groups = read_labels(label_path)
        scenes.append(Scene(name, cube, refs, labels, groups or None, smoothed))
    return scenes


# --------------------------------------------------------------------------
# subcommands

def cmd_calibrate(args):
    opts = resolve_options(args)
    raw = load_cube(_require(args.raw))
    refs = _load_refs(args.white, args.dark, float(opts["reflectivity"]))
    cube = calibrate(raw, refs)
    cube = savgol_smooth(cube, int(opts["sg_order"]), int(opts["sg_width"]))
    lo, hi = opts["band_range"]
    cube = crop_bands(cube, lo, hi)
    out = Path(args.output)
    save_cube(cube, out, description="calibrated relative reflectance")
    sidecar = {
        "calibrated": True,
        "source": Path(args.raw).name,
        "reflectivity": float(opts["reflectivity"]),
        "savgol": {"order": int(opts["sg_order"]), "width": int(opts["sg_width"])},
        "band_range_nm": [lo, hi],
    }
    sidecar_path(out).write_text(json.dumps(sidecar, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out} ({cube.width}x{cube.height}x{cube.bands})")
    return EXIT_OK


def cmd_segment(args):
    opts = resolve_options(args)
    config = pipeline_config(opts)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for scene in load_scenes(args, opts, with_labels=False):
        full, _ = preprocess(scene, config)
        regions, rgb, _ = segment(full, config, scene.name)
        dest = out / scene.name if len(args.scenes) > 1 else out
        dest.mkdir(parents=True, exist_ok=True)
        write_regions_pgm(regions, dest / "regions.pgm")
        write_rgb_ppm(rgb, dest / "rgb.ppm")
        with open(dest / "regions.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region_id", "pixel_count", "center_x", "center_y"])
            for rid, (size, (cx, cy)) in enumerate(zip(regions.region_sizes,
                                                       regions.centroids().tolist()), 1):
                w.writerow([rid, size, repr(cx), repr(cy)])
        print(f"{scene.name}: {regions.region_count} regions")
    return EXIT_OK


def cmd_synth(args):
    data = {}
    if args.spec:
        data = json.loads(_require(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        data["seed"] = args.seed
    spec = scene_spec_from_dict(data)
    scene = make_scene(spec)
    paths = write_scene(scene, args.output)
    print(f"wrote {len(paths)} files to {args.output}")
    return EXIT_OK


def cmd_train(args):
    opts = resolve_options(args)
    config = pipeline_config(opts)
    scenes = load_scenes(args, opts)
    missing = [s.name for s in scenes if not s.labels]
    if missing:
        raise InputError(f"no labels for scene(s) {missing}")
    provenance = {"date": args.date} if args.date else None
    result = train_model(scenes, config, provenance)
    out = Path(args.output)
    save_model(result.model, out)
    report_dir = Path(args.report_dir) if args.report_dir else out.with_name(out.stem + "_report")
    report_dir.mkdir(parents=True, exist_ok=True)
    write_predictions_csv(result.report, report_dir / "training_predictions.csv")
    write_evaluation(result.report, report_dir, prefix="training_")
    write_threshold_csv(result.threshold_curve, report_dir / "threshold_errors.csv")
    m = result.report.metrics
    print(f"tau = {result.model.tau:.2f}; training accuracy = {m.accuracy:.4f}")
    return EXIT_OK


def _predict(args, with_labels):
    opts = resolve_options(args)
    config = pipeline_config(opts)
    model = load_model(_require(args.model))
    scenes = load_scenes(args, opts, with_labels=with_labels)
    ev = classify_regions(scenes, model, config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions_csv(ev, out / "predictions.csv")
    for res in ev.scenes:
        dest = out / res.name if len(ev.scenes) > 1 else out
        write_proportion_maps(res.proportions, dest)
        write_proportion_csv(res.proportions, res.regions, dest / "proportions.csv")
        write_regions_pgm(res.regions, dest / "regions.pgm")
    written = write_evaluation(ev, out) if with_labels else []
    if written:
        print(f"accuracy = {ev.metrics.accuracy:.4f} over {ev.counts.total} regions")
    else:
        print(f"classified {len(ev.predictions)} regions")
    return EXIT_OK


def cmd_predict(args):
    return _predict(args, with_labels=False)


def cmd_evaluate(args):
    return _predict(args, with_labels=True)


# --------------------------------------------------------------------------

def _add_common(p, tau=True):
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--band-range", dest="band_range", help="analysis range LO:HI in nm")
    p.add_argument("--sg-order", dest="sg_order", type=int)
    p.add_argument("--sg-width", dest="sg_width", type=int)
    p.add_argument("--seed", type=int, help="k-means seed")
    p.add_argument("--foreground", choices=("minority", "bright", "dark"))
    p.add_argument("--min-area", dest="min_area", type=int)
    p.add_argument("--connectivity", type=int, choices=(4, 8))
    p.add_argument("--roi", help="X0,Y0,X1,Y1 rectangle to analyse")
    p.add_argument("--group", help="label grouping, e.g. black=mature,yellow=immature")
    p.add_argument("--aggregate", choices=("mean", "median"))
    p.add_argument("--reflectivity", type=float)
    if tau:
        p.add_argument("--tau", type=float, help="fixed threshold")


def _add_scenes(p):
    p.add_argument("scenes", nargs="+", metavar="SCENE")
    p.add_argument("--white", help="white reference cube header")
    p.add_argument("--dark", help="dark reference cube header")
    p.add_argument("--labels", action="append", help="labels CSV (one per scene)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsimaturity", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="raw intensities -> smoothed, cropped reflectance")
    p.add_argument("raw")
    p.add_argument("--white", required=True)
    p.add_argument("--dark", required=True)
    p.add_argument("-o", "--output", required=True, help="output cube header")
    _add_common(p, tau=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("segment", help="write region label map and RGB preview")
    _add_scenes(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    _add_common(p, tau=False)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--spec", help="scene spec JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="estimate endmembers and threshold")
    _add_scenes(p)
    p.add_argument("-o", "--output", required=True, help="model file")
    p.add_argument("--report-dir")
    p.add_argument("--date", help="date recorded in the model provenance")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    for name, func, text in (("predict", cmd_predict, "classify scenes"),
                             ("evaluate", cmd_evaluate, "classify and score against labels")):
        p = sub.add_parser(name, help=text)
        _add_scenes(p)
        p.add_argument("--model", required=True)
        p.add_argument("-o", "--output", required=True, help="output directory")
        _add_common(p)
        p.set_defaults(func=func)
    return parser


def _exit_code(exc, command):
    if isinstance(exc, AxisMismatchError):
        return EXIT_MISMATCH
    if isinstance(exc, (SingleClassError, EmptyClassError)):
        return EXIT_TRAINING
    if isinstance(exc, NoRegionsError) and command == "train":
        return EXIT_TRAINING
    return EXIT_INPUT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handled = (InputError, FileNotFoundError, CubeFormatError, ModelFormatError,
               DegenerateReferenceError, LabelError, NoRegionsError, LayoutError,
               SeparationError, AxisMismatchError, SingleClassError, EmptyClassError,
               ValueError, KeyError, OSError, json.JSONDecodeError)
    try:
        return args.func(args)
    except handled as exc:
        code = _exit_code(exc, args.command)
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"hsimaturity {args.command}: error: {msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
