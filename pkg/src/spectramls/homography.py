"""Projective registration between pixel grids.

Direct linear transformation with Hartley point normalization, wrapped
in a seeded RANSAC loop over 4-point minimal samples, then a final
re-fit on the accepted inliers. Error metric throughout is the forward
transfer distance |H p - q| in pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MatchingError, SchemaError

_MIN_PAIRS = 4
_COLLINEAR_REL_AREA = 1e-8
_CONFIDENCE = 0.9999


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so H[2,2] = 1."""

    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        if H.shape != (3, 3):
            raise SchemaError(f"homography must be 3x3, got {H.shape}")
        if not np.isfinite(H).all():
            raise SchemaError("homography entries must be finite")
        if H[2, 2] == 0:
            raise SchemaError("homography cannot be normalized: H[2,2] is zero")
        H = H / H[2, 2]
        if abs(np.linalg.det(H)) < 1e-12:
            raise SchemaError("homography is singular")
        H = np.ascontiguousarray(H)
        H.flags.writeable = False
        object.__setattr__(self, "H", H)

    def apply(self, points) -> np.ndarray:
        """Map (n, 2) or (2,) points; perspective divide included."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ones = np.ones((pts.shape[0], 1))
        projected = np.hstack([pts, ones]) @ self.H.T
        out = projected[:, :2] / projected[:, 2:3]
        return out[0] if np.asarray(points).ndim == 1 else out

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.H))


def _hartley_transform(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    spread = np.linalg.norm(pts - centroid, axis=1).mean()
    scale = math.sqrt(2) / spread if spread > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def fit_homography(src, dst) -> Homography:
    """Least-squares DLT over all given correspondences (no outlier
    handling); raises on degenerate geometry."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise SchemaError(f"correspondences must be two (n, 2) arrays, got {src.shape} and {dst.shape}")
    if src.shape[0] < _MIN_PAIRS:
        raise MatchingError(f"need at least {_MIN_PAIRS} correspondences, got {src.shape[0]}")
    Ts = _hartley_transform(src)
    Td = _hartley_transform(dst)
    ns = (np.column_stack([src, np.ones(len(src))]) @ Ts.T)[:, :2]
    nd = (np.column_stack([dst, np.ones(len(dst))]) @ Td.T)[:, :2]
    A = np.zeros((2 * len(ns), 9))
    x, y = ns[:, 0], ns[:, 1]
    u, v = nd[:, 0], nd[:, 1]
    A[0::2, 0] = -x
    A[0::2, 1] = -y
    A[0::2, 2] = -1.0
    A[0::2, 6] = u * x
    A[0::2, 7] = u * y
    A[0::2, 8] = u
    A[1::2, 3] = -x
    A[1::2, 4] = -y
    A[1::2, 5] = -1.0
    A[1::2, 6] = v * x
    A[1::2, 7] = v * y
    A[1::2, 8] = v
    _, _, vt = np.linalg.svd(A)
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-12:
        raise MatchingError("degenerate correspondence geometry")
    return Homography(H)


def _has_collinear_triple(pts: np.ndarray) -> bool:
    span = np.ptp(pts, axis=0).max()
    floor = _COLLINEAR_REL_AREA * max(span * span, 1.0)
    m = len(pts)
    for i in range(m - 2):
        for j in range(i + 1, m - 1):
            for k in range(j + 1, m):
                a, b, c = pts[i], pts[j], pts[k]
                area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
                if area2 < floor:
                    return True
    return False


def transfer_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(h.apply(src) - dst, axis=1)


def estimate_homography(
    src,
    dst,
    *,
    iterations: int = 2000,
    inlier_tol: float = 3.0,
    rng: np.random.Generator | int | None = 0,
) -> tuple[Homography, np.ndarray]:
    """Robust estimate; returns (homography, boolean inlier mask).

    The model with the most inliers wins; equal counts fall back to the
    lower mean inlier error. A final all-inlier DLT re-fit sharpens the
    winning model. Deterministic for a fixed rng seed.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise SchemaError(f"correspondences must be two (n, 2) arrays, got {src.shape} and {dst.shape}")
    n = src.shape[0]
    if n < _MIN_PAIRS:
        raise MatchingError(f"need at least {_MIN_PAIRS} correspondences, got {n}")
    if n == _MIN_PAIRS:
        if _has_collinear_triple(src) or _has_collinear_triple(dst):
            raise MatchingError("minimal sample contains collinear points")
        h = fit_homography(src, dst)
        return h, np.ones(n, dtype=bool)

    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    best_count = 0
    best_mean = math.inf
    best_mask = None
    needed = iterations
    attempt = 0
    while attempt < needed:
        attempt += 1
        sample = rng.choice(n, size=_MIN_PAIRS, replace=False)
        s4, d4 = src[sample], dst[sample]
        if _has_collinear_triple(s4) or _has_collinear_triple(d4):
            continue
        try:
            candidate = fit_homography(s4, d4)
        except (MatchingError, np.linalg.LinAlgError, SchemaError):
            continue
        errors = transfer_errors(candidate, src, dst)
        mask = errors < inlier_tol
        count = int(mask.sum())
        if count < _MIN_PAIRS:
            continue
        mean_err = float(errors[mask].mean())
        if count > best_count or (count == best_count and mean_err < best_mean):
            best_count = count
            best_mean = mean_err
            best_mask = mask
            # adaptive stop: enough trials that a clean minimal sample
            # was overwhelmingly likely given the inlier ratio seen
            ratio = count / n
            good = ratio**_MIN_PAIRS
            if good >= 1.0:
                needed = attempt
            elif good > 0:
                needed = min(needed, attempt + math.ceil(math.log(1.0 - _CONFIDENCE) / math.log(1.0 - good)))
    if best_mask is None:
        raise MatchingError("RANSAC could not find a homography supported by 4 inliers")
    refit = fit_homography(src[best_mask], dst[best_mask])
    return refit, best_mask
