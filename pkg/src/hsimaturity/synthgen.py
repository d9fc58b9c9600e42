"""Synthetic trays of disk-shaped "pods" with known endmembers, proportions and
labels.

All randomness flows from ``numpy.random.default_rng(seed)`` (PCG64), drawn in
a fixed order, so a spec and seed always reproduce the same scene bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cube import CalibrationRefs, HyperCube, WavelengthAxis, save_cube, uniform_axis
from .maturity import IMMATURE, MATURE
from .netpbm import write_pgm
from .segmentation import RegionSet
from .unmixing import EndmemberSet

__all__ = ["SeparationError", "LayoutError", "SceneSpec", "SyntheticScene",
           "make_endmembers", "make_scene", "write_scene", "scene_spec_from_dict"]

MATURE_COLORS = ("black", "brown")
IMMATURE_COLORS = ("yellow", "orange")


class SeparationError(ValueError):
    """Requested endmembers cannot be made (or are not) sufficiently distinct."""


class LayoutError(ValueError):
    """Disks overlap or leave the image."""


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def make_endmembers(axis, shape: str = "sigmoid", gap: float = 0.1, path=None,
                    analysis_range=(650.0, 1000.0)) -> EndmemberSet:
    """Truth spectra for the mature and immature classes.

    The ``"sigmoid"`` pair rises through the red edge with the immature
    spectrum above the mature one by at least ``gap`` everywhere; the gap
    itself widens towards the near infrared, so the two are not collinear.
    ``"file"`` reads a CSV with columns ``wavelength, mature, immature`` and
    interpolates it onto ``axis``. Either way the two spectra must differ by
    at least ``gap`` in every band of ``analysis_range``.
    """
    axis = axis if isinstance(axis, WavelengthAxis) else WavelengthAxis(axis)
    lam = axis.nm
    if shape == "sigmoid":
        if gap <= 0:
            raise SeparationError(f"gap must be positive, got {gap}")
        mature = 0.20 + 0.25 * _sigmoid((lam - 700.0) / 30.0)
        immature = mature + gap + 0.10 * _sigmoid((lam - 850.0) / 40.0)
        if immature.max() > 1.0:
            raise SeparationError(
                f"gap {gap} pushes the immature spectrum above reflectance 1")
    elif shape == "file":
        if path is None:
            raise ValueError("shape='file' needs a path")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        mature = np.interp(lam, data[:, 0], data[:, 1])
        immature = np.interp(lam, data[:, 0], data[:, 2])
    else:
        raise ValueError(f"unknown endmember shape {shape!r}")
    inside = (lam >= analysis_range[0]) & (lam <= analysis_range[1])
    if not inside.any():
        inside = np.ones_like(lam, dtype=bool)
    sep = float(np.min(np.abs(immature - mature)[inside]))
    if sep < gap or sep == 0.0:
        raise SeparationError(
            f"endmembers differ by only {sep:.3g} in some band (need {gap})")
    return EndmemberSet((MATURE, IMMATURE), axis, np.stack([mature, immature]))


@dataclass
class SceneSpec:
    columns: int = 5
    rows: int = 3
    radius: int = 18
    width: int = 256
    height: int = 160
    axis_lo_nm: float = 650.0
    axis_hi_nm: float = 1000.0
    bands: int = 350
    endmember_gap: float = 0.1
    endmember_file: str | None = None
    n_immature: int = 8
    classes: list | None = None         # per-region "mature"/"immature", overrides n_immature
    proportion_model: str = "pure"      # "pure" or "gradient"
    gradient_span: float = 0.2
    noise_sigma: float = 0.005
    background: float = 0.05
    reflectivity: float = 0.99
    ref_lines: int = 4
    ref_noise: float = 2.0              # counts
    cultivar: str = "synthetic"
    seed: int = 0

    def axis(self) -> WavelengthAxis:
        return uniform_axis(self.axis_lo_nm, self.axis_hi_nm, self.bands)

    def centers(self) -> list:
        """Disk centres ``(x, y)`` in row-major order."""
        cw, ch = self.width / self.columns, self.height / self.rows
        return [(int(round((c + 0.5) * cw)), int(round((r + 0.5) * ch)))
                for r in range(self.rows) for c in range(self.columns)]

    def validate(self):
        if self.columns < 1 or self.rows < 1 or self.radius < 1:
            raise LayoutError("grid needs at least one disk of radius >= 1")
        if self.proportion_model not in ("pure", "gradient"):
            raise ValueError(f"unknown proportion model {self.proportion_model!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        centers = self.centers()
        for x, y in centers:
            if (x - self.radius < 0 or y - self.radius < 0
                    or x + self.radius >= self.width or y + self.radius >= self.height):
                raise LayoutError(f"disk at ({x}, {y}) leaves the {self.width}x{self.height} image")
        for i, (xa, ya) in enumerate(centers):
            for xb, yb in centers[i + 1:]:
                # one background pixel between disks keeps them separate under 8-connectivity
                if np.hypot(xa - xb, ya - yb) < 2 * self.radius + 2:
                    raise LayoutError(
                        f"disks at ({xa}, {ya}) and ({xb}, {yb}) overlap or touch")
        n = len(centers)
        if self.classes is not None:
            if len(self.classes) != n or set(self.classes) - {MATURE, IMMATURE}:
                raise ValueError(f"classes must list {n} entries of mature/immature")
        elif not 0 <= self.n_immature <= n:
            raise ValueError(f"n_immature must be in 0..{n}")


def scene_spec_from_dict(data: dict) -> SceneSpec:
    known = SceneSpec.__dataclass_fields__
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown scene spec keys {sorted(unknown)}")
    return SceneSpec(**data)


@dataclass(eq=False)
class SyntheticScene:
    raw: HyperCube
    refs: CalibrationRefs
    regions: RegionSet
    proportions: np.ndarray             # (height, width, 2), (mature, immature)
    labels: dict                        # region id -> colour label
    classes: dict                       # region id -> mature/immature
    endmembers: EndmemberSet
    reflectance: np.ndarray             # noise-included truth before the raw encoding
    spec: SceneSpec = field(default_factory=SceneSpec)


def _lamp(lam):
    return 3000.0 + 1500.0 * np.exp(-((lam - 800.0) / 250.0) ** 2)


def _dark(lam):
    return 100.0 + 5.0 * np.sin(lam / 40.0)


def make_scene(spec: SceneSpec, endmembers: EndmemberSet | None = None) -> SyntheticScene:
    spec.validate()
    axis = spec.axis()
    if endmembers is None:
        endmembers = make_endmembers(axis, "file" if spec.endmember_file else "sigmoid",
                                     spec.endmember_gap, spec.endmember_file,
                                     (spec.axis_lo_nm, spec.axis_hi_nm))
    elif endmembers.axis != axis:
        raise ValueError("endmembers are not on the scene axis")
    em = endmembers.reordered((MATURE, IMMATURE)).spectra
    rng = np.random.default_rng(spec.seed)
    centers = spec.centers()
    n = len(centers)

    if spec.classes is not None:
        region_class = list(spec.classes)
    else:
        immature_ids = set(rng.permutation(n)[:spec.n_immature].tolist())
        region_class = [IMMATURE if i in immature_ids else MATURE for i in range(n)]
    colour_pick = rng.integers(0, 2, size=n)
    labels, classes = {}, {}
    for i, cls in enumerate(region_class):
        palette = IMMATURE_COLORS if cls == IMMATURE else MATURE_COLORS
        labels[i + 1] = palette[int(colour_pick[i])]
        classes[i + 1] = cls

    h, w = spec.height, spec.width
    ys, xs = np.mgrid[0:h, 0:w]
    label_map = np.zeros((h, w), dtype=np.int32)
    p_imm = np.zeros((h, w))
    for i, (cx, cy) in enumerate(centers):
        disk = (xs - cx) ** 2 + (ys - cy) ** 2 <= spec.radius ** 2
        label_map[disk] = i + 1
        level = 1.0 if region_class[i] == IMMATURE else 0.0
        if spec.proportion_model == "gradient":
            t = (1.0 + (xs[disk] - cx) / spec.radius) / 2.0
            shift = spec.gradient_span * t
            p_imm[disk] = np.clip(level - shift if level else shift, 0.0, 1.0)
        else:
            p_imm[disk] = level
    fg = label_map > 0
    proportions = np.zeros((h, w, 2))
    proportions[fg, 0] = 1.0 - p_imm[fg]
    proportions[fg, 1] = p_imm[fg]

    reflectance = np.full((h, w, len(axis)), spec.background)
    reflectance[fg] = proportions[fg] @ em
    reflectance += rng.normal(0.0, 1.0, size=reflectance.shape) * spec.noise_sigma

    lam = axis.nm
    white = _lamp(lam) + spec.ref_noise * rng.normal(size=(spec.ref_lines, w, len(axis)))
    dark = _dark(lam) + spec.ref_noise * rng.normal(size=(spec.ref_lines, w, len(axis)))
    refs = CalibrationRefs(white, dark, spec.reflectivity)
    raw = refs.dark_mean + (reflectance / spec.reflectivity) * (refs.white_mean - refs.dark_mean)

    return SyntheticScene(
        raw=HyperCube(raw, axis),
        refs=refs,
        regions=RegionSet.from_label_map(label_map),
        proportions=proportions,
        labels=labels,
        classes=classes,
        endmembers=endmembers.reordered((MATURE, IMMATURE)),
        reflectance=reflectance,
        spec=spec,
    )


def write_scene(scene: SyntheticScene, out_dir) -> list:
    """Write the scene in the toolkit's file formats; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    axis = scene.raw.axis
    save_cube(scene.raw, out / "scene.hdr", description="synthetic raw intensities")
    save_cube(HyperCube(scene.refs.white, axis), out / "white.hdr",
              description="synthetic white reference")
    save_cube(HyperCube(scene.refs.dark, axis), out / "dark.hdr",
              description="synthetic dark reference")
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "color_label", "cultivar"])
        for rid in sorted(scene.labels):
            writer.writerow([rid, scene.labels[rid], scene.spec.cultivar])
    write_pgm(out / "truth_regions.pgm", scene.regions.label_map)
    fg = scene.regions.label_map > 0
    ys, xs = np.nonzero(fg)
    with open(out / "truth_proportions.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "region_id", "p_mature", "p_immature"])
        for y, x in zip(ys.tolist(), xs.tolist()):
            p = scene.proportions[y, x]
            writer.writerow([x, y, int(scene.regions.label_map[y, x]),
                             repr(float(p[0])), repr(float(p[1]))])
    with open(out / "endmembers.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength", *scene.endmembers.class_names])
        for b, lam in enumerate(axis.nm.tolist()):
            writer.writerow([repr(lam), *[repr(float(v)) for v in scene.endmembers.spectra[:, b]]])
    (out / "spec.json").write_text(json.dumps(asdict(scene.spec), indent=1) + "\n",
                                   encoding="utf-8")
    return sorted(p for p in out.iterdir() if p.is_file())
