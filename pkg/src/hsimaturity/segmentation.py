"""RGB preview extraction, 2-means foreground separation and region indexing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cube import HyperCube
from .netpbm import write_pgm, write_ppm

__all__ = [
    "NoRegionsError", "RgbImage", "KMeansResult", "RegionSet", "extract_rgb",
    "kmeans2", "segment_regions", "roi_mask", "write_regions_pgm", "write_rgb_ppm",
]

FOREGROUND_RULES = ("minority", "bright", "dark")


class NoRegionsError(RuntimeError):
    """Segmentation left no region large enough to analyse."""


@dataclass(frozen=True, eq=False)
class RgbImage:
    pixels: np.ndarray                  # (height, width, 3) floats in [0, 1]
    bands: tuple = ()                   # cube band index used per channel

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class KMeansResult:
    assignment: np.ndarray              # (height, width) int8: 0/1, -1 outside mask
    centroids: np.ndarray               # (2, 3)
    degenerate: bool
    n_iter: int
    inertia: tuple = ()                 # within-cluster SSE after each assignment


@dataclass(frozen=True, eq=False)
class RegionSet:
    """Label map with 0 for background and 1..R for regions in row-major
    order of each region's first pixel."""

    label_map: np.ndarray
    region_sizes: tuple = field(default=())

    @classmethod
    def from_label_map(cls, label_map) -> "RegionSet":
        label_map = np.asarray(label_map, dtype=np.int32)
        r = int(label_map.max(initial=0))
        sizes = np.bincount(label_map.ravel(), minlength=r + 1)[1:]
        return cls(label_map, tuple(int(s) for s in sizes))

    @property
    def height(self) -> int:
        return self.label_map.shape[0]

    @property
    def width(self) -> int:
        return self.label_map.shape[1]

    @property
    def region_count(self) -> int:
        return len(self.region_sizes)

    @property
    def is_empty(self) -> bool:
        return self.region_count == 0

    @property
    def region_ids(self) -> range:
        return range(1, self.region_count + 1)

    def mask(self, region_id: int) -> np.ndarray:
        return self.label_map == region_id

    def centroids(self) -> np.ndarray:
        """``(R, 2)`` array of region centres as ``(x, y)``."""
        ys, xs = np.indices(self.label_map.shape)
        lab = self.label_map.ravel()
        sizes = np.bincount(lab, minlength=self.region_count + 1)[1:]
        cx = np.bincount(lab, weights=xs.ravel(), minlength=self.region_count + 1)[1:]
        cy = np.bincount(lab, weights=ys.ravel(), minlength=self.region_count + 1)[1:]
        return np.column_stack([cx / sizes, cy / sizes])


def extract_rgb(cube: HyperCube, r_nm: float = 640.0, g_nm: float = 550.0,
                b_nm: float = 460.0) -> RgbImage:
    """Colour preview from the bands nearest the requested wavelengths."""
    bands = tuple(cube.axis.nearest_band(w) for w in (r_nm, g_nm, b_nm))
    rgb = np.clip(cube.values[..., list(bands)].astype(np.float64), 0.0, 1.0)
    return RgbImage(rgb, bands)


def roi_mask(height: int, width: int, roi=None) -> np.ndarray:
    """Boolean mask of the rectangle ``(x0, y0, x1, y1)``, end-exclusive."""
    mask = np.zeros((height, width), dtype=bool)
    if roi is None:
        mask[:] = True
        return mask
    x0, y0, x1, y1 = (int(v) for v in roi)
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ValueError(f"region of interest {roi} outside {width}x{height} image")
    mask[y0:y1, x0:x1] = True
    return mask


def _sse(features, assign, centroids):
    d = features - centroids[assign]
    return float(np.einsum("ij,ij->", d, d))


def kmeans2(image: RgbImage, seed: int = 0, max_iter: int = 100,
            mask=None) -> KMeansResult:
    """Lloyd's algorithm with two clusters on per-pixel RGB values.

    The first centre is a seeded random pixel, the second the pixel farthest
    from it (lowest index on ties). A pixel equidistant to both centres joins
    cluster 0. Images with fewer than two distinct colours come back with
    ``degenerate=True`` and everything in cluster 0.
    """
    h, w = image.height, image.width
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    features = image.pixels[mask].astype(np.float64)
    n = features.shape[0]
    if n == 0:
        raise ValueError("no pixels to cluster")
    assignment = np.full((h, w), -1, dtype=np.int8)

    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    dist = np.sum((features - features[first]) ** 2, axis=1)
    second = int(np.argmax(dist))
    if dist[second] == 0.0:
        assignment[mask] = 0
        c = features[first]
        return KMeansResult(assignment, np.stack([c, c]), True, 0, (0.0,))

    centroids = np.stack([features[first], features[second]])
    labels = None
    inertia = []
    it = 0
    for it in range(1, max_iter + 1):
        d0 = np.sum((features - centroids[0]) ** 2, axis=1)
        d1 = np.sum((features - centroids[1]) ** 2, axis=1)
        new = (d1 < d0).astype(np.int8)
        inertia.append(_sse(features, new, centroids))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in (0, 1):
            members = features[labels == k]
            if members.shape[0]:
                centroids[k] = members.mean(axis=0)
    assignment[mask] = labels
    return KMeansResult(assignment, centroids, False, it, tuple(inertia))


def _pick_foreground(image_pixels, assignment, rule):
    counts = [int(np.count_nonzero(assignment == k)) for k in (0, 1)]
    brightness = []
    for k in (0, 1):
        sel = assignment == k
        brightness.append(float(image_pixels[sel].mean()) if counts[k] else -np.inf)
    if rule == "bright":
        return 0 if brightness[0] > brightness[1] else 1
    if rule == "dark":
        present = [k for k in (0, 1) if counts[k]]
        return min(present, key=lambda k: (brightness[k], k))
    if counts[0] != counts[1]:
        return 0 if counts[0] < counts[1] else 1
    # equal areas: prefer the brighter cluster so the choice ignores cluster ids
    return 0 if brightness[0] > brightness[1] else 1


def segment_regions(image: RgbImage, cluster, min_region_area: int = 50,
                    connectivity: int = 8, foreground: str = "minority",
                    roi=None) -> RegionSet:
    """Label connected foreground components, dropping those below ``min_region_area``.

    ``cluster`` is a :class:`KMeansResult` or a ``(height, width)`` assignment.
    The returned set may be empty; check ``RegionSet.is_empty``.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    if foreground not in FOREGROUND_RULES:
        raise ValueError(f"foreground rule must be one of {FOREGROUND_RULES}")
    assignment = cluster.assignment if isinstance(cluster, KMeansResult) else np.asarray(cluster)
    if assignment.shape != (image.height, image.width):
        raise ValueError(
            f"assignment {assignment.shape} does not match image "
            f"{(image.height, image.width)}")
    fg_id = _pick_foreground(image.pixels, assignment, foreground)
    fg = assignment == fg_id
    if roi is not None:
        fg &= roi_mask(image.height, image.width, roi)

    roots = _kernels.component_roots(fg, connectivity == 8)
    label_map = np.zeros(fg.shape, dtype=np.int32)
    if fg.any():
        uniq, inverse, sizes = np.unique(roots[fg], return_inverse=True, return_counts=True)
        # roots are first-pixel flat indices, so sorted order is discovery order
        keep = sizes >= min_region_area
        new_ids = np.zeros(uniq.size, dtype=np.int32)
        new_ids[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.int32)
        label_map[fg] = new_ids[inverse.ravel()]
    return RegionSet.from_label_map(label_map)


def write_regions_pgm(regions: RegionSet, path) -> None:
    write_pgm(path, regions.label_map)


def write_rgb_ppm(image: RgbImage, path) -> None:
    write_ppm(path, image.pixels)
