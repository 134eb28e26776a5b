"""Automatic control-point discovery.

Coarse-to-fine: keypoints from every cube band are matched against the
reference image's luminance proxy, the pooled matches feed a robust
homography, and a seeded sample of cube pixels is then refined inside a
small window on the reference side by comparing fixed-scale patch
descriptors. All randomness flows from one seed, so the same inputs and
config always produce the same pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cube import SpectralCube
from .errors import MatchingError, OutOfBoundsError, SchemaError
from .features import Keypoint, PatchDescriptorExtractor, detect_keypoints
from .homography import Homography, estimate_homography
from .image import RgbImage, luminance
from .points import ControlPointSet

DEFAULT_SEED = 1729


@dataclass(frozen=True)
class MatchConfig:
    window_radius: int = 4  # 9x9 refinement window
    sample_fraction: float = 0.01
    ratio_threshold: float = 0.8
    ransac_iterations: int = 2000
    ransac_inlier_tol: float = 3.0
    rng_seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.window_radius < 0:
            raise SchemaError(f"window_radius must be >= 0, got {self.window_radius}")
        if not (0.0 < self.sample_fraction <= 1.0):
            raise SchemaError(f"sample_fraction must be in (0, 1], got {self.sample_fraction}")
        if not (0.0 < self.ratio_threshold < 1.0):
            raise SchemaError(f"ratio_threshold must be in (0, 1), got {self.ratio_threshold}")
        if self.ransac_iterations < 1:
            raise SchemaError(f"ransac_iterations must be >= 1, got {self.ransac_iterations}")
        if not (self.ransac_inlier_tol > 0):
            raise SchemaError(f"ransac_inlier_tol must be > 0, got {self.ransac_inlier_tol}")


@dataclass
class MatchReport:
    """Diagnostics for the run report the CLI writes."""

    cube_keypoints: int = 0
    rgb_keypoints: int = 0
    pooled_matches: int = 0
    ransac_inliers: int = 0
    sampled_pixels: int = 0
    skipped_zero_signature: int = 0
    skipped_out_of_bounds: int = 0
    pairs: int = 0
    homography: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cubeKeypoints": self.cube_keypoints,
            "rgbKeypoints": self.rgb_keypoints,
            "pooledMatches": self.pooled_matches,
            "ransacInliers": self.ransac_inliers,
            "sampledPixels": self.sampled_pixels,
            "skippedZeroSignature": self.skipped_zero_signature,
            "skippedOutOfBounds": self.skipped_out_of_bounds,
            "pairs": self.pairs,
            "homography": self.homography,
        }


def cube_proxy(cube: SpectralCube) -> np.ndarray:
    """Mean over bands; the single texture image standing in for the
    whole cube on the HSI side."""
    return cube.values.mean(axis=2)


def rgb_proxy(image: RgbImage) -> np.ndarray:
    return luminance(image)


def match_descriptors(
    a: list[Keypoint], b: list[Keypoint], cfg: MatchConfig | None = None
) -> list[tuple[int, int, float]]:
    """Ratio-test matching a -> b; (indexA, indexB, distance) triples
    sorted by ascending descriptor distance. Empty input matches empty
    output; an exact tie between the two nearest neighbors is rejected."""
    cfg = cfg or MatchConfig()
    if not a or not b:
        return []
    da = np.stack([kp.descriptor for kp in a])
    db = np.stack([kp.descriptor for kp in b])
    sq = np.maximum(
        (da * da).sum(axis=1)[:, None] + (db * db).sum(axis=1)[None, :] - 2.0 * (da @ db.T),
        0.0,
    )
    dists = np.sqrt(sq)
    accepted = []
    for ia in range(len(a)):
        row = dists[ia]
        ib = int(np.argmin(row))
        d1 = float(row[ib])
        if len(b) == 1:
            ratio = 0.0
        else:
            rest = np.delete(row, ib)
            d2 = float(rest.min())
            ratio = 1.0 if d2 == 0.0 else d1 / d2
        if ratio < cfg.ratio_threshold:
            accepted.append((ia, ib, d1))
    accepted.sort(key=lambda t: (t[2], t[0]))
    return accepted


def _refine(
    cube_desc: PatchDescriptorExtractor,
    rgb_desc: PatchDescriptorExtractor,
    h: Homography,
    pixel: tuple[int, int],
    radius: int,
) -> tuple[int, int]:
    px, py = pixel
    tx, ty = h.apply(np.array([float(px), float(py)]))
    height, width = rgb_desc.shape
    cx = int(round(tx))
    cy = int(round(ty))
    x0, x1 = max(cx - radius, 0), min(cx + radius, width - 1)
    y0, y1 = max(cy - radius, 0), min(cy + radius, height - 1)
    if x0 > x1 or y0 > y1:
        raise OutOfBoundsError(
            f"pixel ({px}, {py}) projects to ({tx:.1f}, {ty:.1f}), "
            f"entirely outside the {width}x{height} reference"
        )
    anchor = cube_desc.descriptor(float(px), float(py))
    best = None
    for wy in range(y0, y1 + 1):
        for wx in range(x0, x1 + 1):
            cand = rgb_desc.descriptor(float(wx), float(wy))
            dist = float(np.linalg.norm(anchor - cand))
            proximity = math.hypot(wx - tx, wy - ty)
            key = (dist, proximity, wy, wx)
            if best is None or key < best[0]:
                best = (key, (wx, wy))
    return best[1]


def refine_match(
    cube: SpectralCube,
    rgb: RgbImage,
    h: Homography,
    pixel: tuple[int, int],
    cfg: MatchConfig | None = None,
) -> tuple[int, int]:
    """Best reference-side position for one cube pixel, searched in the
    (2r+1)^2 window around its homography projection. Standalone
    convenience; the batch pipeline reuses the descriptor extractors."""
    cfg = cfg or MatchConfig()
    return _refine(
        PatchDescriptorExtractor(cube_proxy(cube)),
        PatchDescriptorExtractor(rgb_proxy(rgb)),
        h,
        pixel,
        cfg.window_radius,
    )


def _pooled_band_matches(
    cube: SpectralCube, rgb_kps: list[Keypoint], cfg: MatchConfig, report: MatchReport
) -> tuple[np.ndarray, np.ndarray]:
    """Keypoint matches from every band against the reference, pooled
    and deduplicated by 1 px cube-side proximity, best distance first."""
    pooled = []
    total_cube_kps = 0
    for band in range(cube.bands):
        kps = detect_keypoints(cube.band(band))
        total_cube_kps += len(kps)
        for ia, ib, dist in match_descriptors(kps, rgb_kps, cfg):
            a, b = kps[ia], rgb_kps[ib]
            pooled.append((dist, band, ia, (a.x, a.y), (b.x, b.y)))
    report.cube_keypoints = total_cube_kps
    pooled.sort(key=lambda t: (t[0], t[1], t[2]))
    kept_src, kept_dst = [], []
    for _, _, _, src_xy, dst_xy in pooled:
        if any(abs(src_xy[0] - kx) <= 1.0 and abs(src_xy[1] - ky) <= 1.0 for kx, ky in kept_src):
            continue
        kept_src.append(src_xy)
        kept_dst.append(dst_xy)
    report.pooled_matches = len(kept_src)
    return np.array(kept_src, dtype=np.float64), np.array(kept_dst, dtype=np.float64)


def build_control_points(
    cube: SpectralCube,
    rgb: RgbImage,
    cfg: MatchConfig | None = None,
    *,
    sensor: str = "",
) -> tuple[ControlPointSet, MatchReport]:
    """Run the whole pipeline: per-band keypoints, pooled matches, a
    robust homography, then a seeded pixel sample refined pair by pair.

    Zero-signature pixels and pixels projecting fully outside the
    reference are skipped, with counts recorded in the report.
    """
    cfg = cfg or MatchConfig()
    report = MatchReport()
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    ransac_rng = np.random.default_rng(seeds[0])
    sample_rng = np.random.default_rng(seeds[1])

    rgb_kps = detect_keypoints(rgb_proxy(rgb))
    report.rgb_keypoints = len(rgb_kps)
    if not rgb_kps:
        raise MatchingError("no keypoints found on the reference image")
    src, dst = _pooled_band_matches(cube, rgb_kps, cfg, report)
    if len(src) < 4:
        raise MatchingError(
            f"only {len(src)} pooled keypoint matches; at least 4 needed for a homography"
        )
    h, inlier_mask = estimate_homography(
        src,
        dst,
        iterations=cfg.ransac_iterations,
        inlier_tol=cfg.ransac_inlier_tol,
        rng=ransac_rng,
    )
    report.ransac_inliers = int(inlier_mask.sum())
    report.homography = [[float(v) for v in row] for row in h.H]

    total = cube.width * cube.height
    count = min(math.ceil(cfg.sample_fraction * total), total)
    flat = np.sort(sample_rng.choice(total, size=count, replace=False))
    report.sampled_pixels = int(count)

    cube_desc = PatchDescriptorExtractor(cube_proxy(cube))
    ref_desc = PatchDescriptorExtractor(rgb_proxy(rgb))
    u_rows, v_rows, hsi_refs, rgb_refs = [], [], [], []
    for index in flat:
        y, x = divmod(int(index), cube.width)
        signature = cube.values[y, x]
        if not (signature != 0).any():
            report.skipped_zero_signature += 1
            continue
        try:
            rx, ry = _refine(cube_desc, ref_desc, h, (x, y), cfg.window_radius)
        except OutOfBoundsError:
            report.skipped_out_of_bounds += 1
            continue
        u_rows.append(signature)
        v_rows.append(rgb.values[ry, rx].astype(np.float64))
        hsi_refs.append((x, y))
        rgb_refs.append((rx, ry))
    if not u_rows:
        raise MatchingError("every sampled pixel was skipped; no control points produced")
    cps = ControlPointSet(
        u=np.array(u_rows),
        v=np.array(v_rows),
        sensor=sensor,
        hsi_pixels=tuple(hsi_refs),
        rgb_pixels=tuple(rgb_refs),
    )
    report.pairs = cps.n
    return cps, report
