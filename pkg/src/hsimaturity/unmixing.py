"""Class-mean endmembers and fully constrained least-squares (FCLS) unmixing.

Each pixel ``x`` is modelled as ``E^T p + noise`` with ``p`` on the probability
simplex. The estimator minimises ``||x - E^T p||^2`` over that simplex.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .cube import HyperCube, Spectrum, WavelengthAxis
from .netpbm import write_pgm
from .segmentation import RegionSet

__all__ = [
    "AxisMismatchError", "EmptyClassError", "NonUniqueSolutionWarning",
    "DEFAULT_GROUPING", "EndmemberSet", "LabeledRegionSpectra", "ProportionMap",
    "estimate_endmembers", "unmix_pixel", "unmix_pixels", "unmix_regions",
    "write_proportion_maps", "write_proportion_csv", "fcls_objective",
]

# mesocarp colour -> maturity class; class names map to themselves
DEFAULT_GROUPING = {
    "black": "mature",
    "brown": "mature",
    "orange": "immature",
    "yellow": "immature",
    "mature": "mature",
    "immature": "immature",
}

COND_LIMIT = 1e12
JITTER = 1e-10
DUPLICATE_RTOL = 1e-9


class AxisMismatchError(ValueError):
    """Spectra and endmembers live on different wavelength axes."""


class EmptyClassError(ValueError):
    """A class in the grouping received no training spectra."""


class NonUniqueSolutionWarning(UserWarning):
    """Endmembers are (nearly) duplicated, so proportions are not identifiable."""


@dataclass(frozen=True, eq=False)
class EndmemberSet:
    class_names: tuple
    axis: WavelengthAxis
    spectra: np.ndarray

    def __post_init__(self):
        names = tuple(str(c) for c in self.class_names)
        axis = self.axis if isinstance(self.axis, WavelengthAxis) else WavelengthAxis(self.axis)
        spectra = np.array(self.spectra, dtype=np.float64, ndmin=2)
        if len(names) < 1:
            raise ValueError("need at least one endmember")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate class names {names}")
        if spectra.shape != (len(names), len(axis)):
            raise ValueError(
                f"endmember matrix {spectra.shape} does not match "
                f"{len(names)} classes x {len(axis)} bands")
        if not np.all(np.isfinite(spectra)):
            raise ValueError("endmember spectra must be finite")
        spectra.setflags(write=False)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "spectra", spectra)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def index(self, class_name: str) -> int:
        try:
            return self.class_names.index(class_name)
        except ValueError:
            raise KeyError(f"no endmember named {class_name!r}; "
                           f"have {list(self.class_names)}") from None

    def __getitem__(self, class_name: str) -> Spectrum:
        return Spectrum(self.axis, self.spectra[self.index(class_name)])

    def reordered(self, class_names: Sequence[str]) -> "EndmemberSet":
        order = [self.index(c) for c in class_names]
        return EndmemberSet(tuple(class_names), self.axis, self.spectra[order])

    def __eq__(self, other):
        if not isinstance(other, EndmemberSet):
            return NotImplemented
        return (self.class_names == other.class_names and self.axis == other.axis
                and np.array_equal(self.spectra, other.spectra))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LabeledRegionSpectra:
    """Pixel spectra of one training region together with its visual label."""

    region_id: int
    label: str
    axis: WavelengthAxis
    spectra: np.ndarray
    scene: str = ""

    def __post_init__(self):
        spectra = np.array(self.spectra, dtype=np.float64, ndmin=2)
        if spectra.shape[1] != len(self.axis):
            raise AxisMismatchError(
                f"region {self.region_id}: {spectra.shape[1]} bands, axis has {len(self.axis)}")
        object.__setattr__(self, "spectra", spectra)

    @property
    def mean_spectrum(self) -> np.ndarray:
        return self.spectra.mean(axis=0)


@dataclass(eq=False)
class ProportionMap:
    """Per-pixel proportions; only pixels in ``valid`` carry meaningful values."""

    class_names: tuple
    values: np.ndarray          # (height, width, M), zeros off the mask
    valid: np.ndarray           # (height, width) bool
    nonunique: bool = False
    fallback_pixels: int = 0
    flagged_regions: tuple = field(default=())

    @property
    def height(self) -> int:
        return self.valid.shape[0]

    @property
    def width(self) -> int:
        return self.valid.shape[1]

    def channel(self, class_name: str) -> np.ndarray:
        return self.values[..., self.class_names.index(class_name)]


def _check_grouping(grouping: Mapping[str, str]):
    classes = []
    for cls in grouping.values():
        if cls not in classes:
            classes.append(cls)
    return classes


def estimate_endmembers(training: Iterable[LabeledRegionSpectra],
                        grouping: Mapping[str, str] = DEFAULT_GROUPING,
                        class_names: Sequence[str] | None = None) -> EndmemberSet:
    """Endmember per class = mean of all training pixel spectra mapped to it.

    Pixels are pooled across regions, so large regions weigh more. ``class_names``
    fixes the output order; by default it follows first appearance in
    ``grouping``'s values.
    """
    classes = list(class_names) if class_names is not None else _check_grouping(grouping)
    sums = {}
    counts = dict.fromkeys(classes, 0)
    axis = None
    for region in training:
        if axis is None:
            axis = region.axis
        elif region.axis != axis:
            raise AxisMismatchError(
                f"region {region.region_id} of {region.scene or 'scene'} is on a "
                "different wavelength axis than earlier regions")
        try:
            cls = grouping[region.label]
        except KeyError:
            raise KeyError(f"label {region.label!r} of region {region.region_id} "
                           f"is not in the grouping map") from None
        if cls not in counts:
            raise KeyError(f"label {region.label!r} maps to unknown class {cls!r}")
        if cls not in sums:
            sums[cls] = np.zeros(len(axis))
        sums[cls] += region.spectra.sum(axis=0)
        counts[cls] += region.spectra.shape[0]
    empty = [c for c in classes if counts[c] == 0]
    if empty:
        raise EmptyClassError(f"no training pixels for class(es) {empty}")
    spectra = np.stack([sums[c] / counts[c] for c in classes])
    return EndmemberSet(tuple(classes), axis, spectra)


def fcls_objective(x, spectra, p) -> float:
    r = np.asarray(x, dtype=float) - np.asarray(p, dtype=float) @ np.asarray(spectra, dtype=float)
    return float(r @ r)


def _prepare(endmembers: EndmemberSet):
    E = endmembers.spectra
    G = E @ E.T
    scale = float(np.max(np.abs(E))) if E.size else 0.0
    nonunique = False
    m = E.shape[0]
    for a in range(m):
        for b in range(a + 1, m):
            if np.linalg.norm(E[a] - E[b]) <= DUPLICATE_RTOL * max(scale, 1e-300) * np.sqrt(E.shape[1]):
                nonunique = True
    if m > 1 and np.linalg.cond(G) > COND_LIMIT:
        G = G + JITTER * np.trace(G) / m * np.eye(m)
    return G, nonunique


def unmix_pixels(X, endmembers: EndmemberSet, *, warn: bool = True):
    """FCLS for every row of ``X`` (shape ``(N, D)``).

    Returns ``(P, status, nonunique)``; ``status`` is nonzero where the active
    set gave up and projected gradient was used instead.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(endmembers.axis):
        raise AxisMismatchError(
            f"pixels have shape {X.shape}, endmembers span {len(endmembers.axis)} bands")
    m = endmembers.n_classes
    G, nonunique = _prepare(endmembers)
    if nonunique and warn:
        warnings.warn("endmembers are duplicated within tolerance; proportions "
                      "are not unique", NonUniqueSolutionWarning, stacklevel=2)
    if m == 1:
        return np.ones((X.shape[0], 1)), np.zeros(X.shape[0], dtype=np.int8), nonunique
    if m == 2 and nonunique:
        return (np.full((X.shape[0], 2), 0.5), np.zeros(X.shape[0], dtype=np.int8),
                nonunique)
    H = X @ endmembers.spectra.T
    P, status = _kernels.fcls_batch(G, H)
    return P, status, nonunique


def unmix_pixel(x, endmembers: EndmemberSet) -> np.ndarray:
    """Simplex-constrained least-squares proportions for one spectrum.

    ``x`` may be a :class:`Spectrum` (its axis is checked) or a plain vector.
    Duplicate endmembers trigger :class:`NonUniqueSolutionWarning`; with two
    identical endmembers the uniform split is returned.
    """
    if isinstance(x, Spectrum):
        if x.axis != endmembers.axis:
            raise AxisMismatchError("spectrum and endmembers use different axes")
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(endmembers.axis),):
        raise AxisMismatchError(
            f"spectrum has {x.size} bands, endmembers have {len(endmembers.axis)}")
    if endmembers.n_classes > len(x):
        raise ValueError("more endmembers than bands")
    P, _, _ = unmix_pixels(x[None, :], endmembers)
    return P[0]


def unmix_regions(cube: HyperCube, regions: RegionSet,
                  endmembers: EndmemberSet) -> ProportionMap:
    """Unmix every foreground pixel of ``cube``; background stays invalid."""
    if cube.axis != endmembers.axis:
        raise AxisMismatchError(
            f"cube axis {cube.axis!r} differs from endmember axis {endmembers.axis!r}; "
            "crop both to the same band range")
    if (cube.height, cube.width) != (regions.height, regions.width):
        raise ValueError(
            f"cube is {cube.width}x{cube.height}, regions are {regions.width}x{regions.height}")
    m = endmembers.n_classes
    valid = regions.label_map > 0
    values = np.zeros((cube.height, cube.width, m))
    if not valid.any():
        return ProportionMap(endmembers.class_names, values, valid)
    P, status, nonunique = unmix_pixels(cube.values[valid], endmembers)
    values[valid] = P
    flagged = ()
    if status.any():
        flagged = tuple(int(r) for r in np.unique(regions.label_map[valid][status != 0]))
    return ProportionMap(endmembers.class_names, values, valid, nonunique=nonunique,
                         fallback_pixels=int(np.count_nonzero(status)),
                         flagged_regions=flagged)


def write_proportion_maps(props: ProportionMap, out_dir, stem: str = "proportion") -> list:
    """One 8-bit graymap per class, value = round(255 * proportion)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, name in enumerate(props.class_names):
        img = np.where(props.valid, np.rint(props.values[..., k] * 255.0), 0).astype(np.uint16)
        path = out_dir / f"{stem}_{name}.pgm"
        write_pgm(path, img, maxval=255)
        paths.append(path)
    return paths


def write_proportion_csv(props: ProportionMap, regions: RegionSet, path) -> None:
    ys, xs = np.nonzero(props.valid)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "region_id", *[f"p_{c}" for c in props.class_names]])
        for y, x in zip(ys.tolist(), xs.tolist()):
            writer.writerow([x, y, int(regions.label_map[y, x]),
                             *[repr(float(v)) for v in props.values[y, x]]])
