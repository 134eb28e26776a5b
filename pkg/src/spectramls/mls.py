"""Moving least squares color transfer.

Every spectral signature x gets its own affine map into RGB, fit by
weighted least squares over the control pairs with weights

    w_k = 1 / max(angle(x, U_k), sadEpsilon)^beta

so nearby signatures dominate. Centering both sides on the weighted
centroids reduces the fit to a p x p linear solve per query:

    F = (Uc' W Uc + lambda I)^-1 Uc' W Vc,   b = vbar - F' ubar

The full-cube renderer batches these solves over fixed-size pixel
chunks; chunk boundaries depend only on the band count, never on the
worker count, so output bytes are reproducible under any parallelism.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cube import SpectralCube
from .errors import BandMismatchError, SchemaError, SingularSystemError, ZeroSignatureError
from .image import RgbImage
from .points import ControlPointSet

OUTPUT_CLAMP = (0.0, 255.0)


@dataclass(frozen=True)
class MlsConfig:
    """Solver knobs.

    ridge_lambda is a relative factor: the Tikhonov term added to the
    normal matrix is ridge_lambda * trace(A)/p, which keeps the
    regularization invariant under uniform rescaling of the signatures
    (angles do not change, so neither should the solution). When the
    trace is zero (a single control pair centers to nothing) the factor
    is used as the absolute term instead. Zero disables the ridge.
    """

    sad_epsilon: float = 1e-8
    ridge_lambda: float = 1e-6
    weight_exponent: float = 1.0
    dedup_enabled: bool = True

    def __post_init__(self):
        if not (self.sad_epsilon > 0):
            raise SchemaError(f"sad_epsilon must be > 0, got {self.sad_epsilon}")
        if not (self.ridge_lambda >= 0):
            raise SchemaError(f"ridge_lambda must be >= 0, got {self.ridge_lambda}")
        if not (self.weight_exponent > 0):
            raise SchemaError(f"weight_exponent must be > 0, got {self.weight_exponent}")


@dataclass(frozen=True)
class AffineColorMap:
    """One signature's local transform y = F' x + b."""

    F: np.ndarray  # (p, 3)
    b: np.ndarray  # (3,)

    def __post_init__(self):
        F = np.asarray(self.F, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if F.ndim != 2 or F.shape[1] != 3:
            raise SchemaError(f"F must be (p, 3), got shape {F.shape}")
        if b.shape != (3,):
            raise SchemaError(f"b must be a 3-vector, got shape {b.shape}")
        if not (np.isfinite(F).all() and np.isfinite(b).all()):
            raise SchemaError("map entries must be finite")
        for name, arr in (("F", F), ("b", b)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def bands(self) -> int:
        return self.F.shape[0]


def _check_signature(x: np.ndarray, bands: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (bands,):
        raise SchemaError(f"signature has shape {x.shape}, expected ({bands},)")
    if not (x != 0).any():
        raise ZeroSignatureError("signature is the zero vector")
    return x


def sad(x, u) -> float:
    """Spectral angle between two signatures, in [0, pi] radians."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if x.shape != u.shape or x.ndim != 1:
        raise SchemaError(f"signature shapes differ: {x.shape} vs {u.shape}")
    nx = np.linalg.norm(x)
    nu = np.linalg.norm(u)
    if nx == 0 or nu == 0:
        raise ZeroSignatureError("angular distance is undefined for the zero vector")
    return float(np.arccos(np.clip(np.dot(x, u) / (nx * nu), -1.0, 1.0)))


def weights(x, cps: ControlPointSet, cfg: MlsConfig) -> np.ndarray:
    """Per-pair weights 1/max(angle, eps)^beta; positive and finite."""
    x = _check_signature(x, cps.bands)
    dots = cps.u @ x
    denom = np.linalg.norm(cps.u, axis=1) * np.linalg.norm(x)
    angles = np.arccos(np.clip(dots / denom, -1.0, 1.0))
    return 1.0 / np.maximum(angles, cfg.sad_epsilon) ** cfg.weight_exponent


def weighted_centroids(cps: ControlPointSet, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (cps.n,):
        raise SchemaError(f"weight vector has shape {w.shape}, expected ({cps.n},)")
    if not ((w > 0).all() and np.isfinite(w).all()):
        raise SchemaError("weights must be positive and finite")
    total = w.sum()
    return (w @ cps.u) / total, (w @ cps.v) / total


def _effective_lambda(trace: float, p: int, cfg: MlsConfig) -> float:
    if cfg.ridge_lambda == 0:
        return 0.0
    scaled = cfg.ridge_lambda * trace / p
    return scaled if scaled > 0 else cfg.ridge_lambda


def solve_affine(x, cps: ControlPointSet, cfg: MlsConfig | None = None) -> AffineColorMap:
    """Fit the local affine map for one query signature."""
    cfg = cfg or MlsConfig()
    x = _check_signature(x, cps.bands)
    w = weights(x, cps, cfg)
    ubar, vbar = weighted_centroids(cps, w)
    uc = cps.u - ubar
    vc = cps.v - vbar
    wuc = uc * w[:, None]
    normal = wuc.T @ uc  # (p, p), PSD
    rhs = wuc.T @ vc  # (p, 3)
    lam = _effective_lambda(float(np.trace(normal)), cps.bands, cfg)
    if lam > 0:
        normal = normal + lam * np.eye(cps.bands)
    try:
        F = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            "normal matrix is singular (too few or collinear control points); "
            "set ridge_lambda > 0"
        ) from None
    if not np.isfinite(F).all():
        raise SingularSystemError(
            "normal matrix is numerically singular; set ridge_lambda > 0"
        )
    b = vbar - F.T @ ubar
    return AffineColorMap(F=F, b=b)


def apply_map_unclamped(m: AffineColorMap, x) -> np.ndarray:
    """y = F' x + b before the gamut clamp, for inspection."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.bands,):
        raise SchemaError(f"signature has shape {x.shape}, expected ({m.bands},)")
    return m.F.T @ x + m.b


def apply_map(m: AffineColorMap, x) -> np.ndarray:
    return np.clip(apply_map_unclamped(m, x), *OUTPUT_CLAMP)


def objective(m: AffineColorMap, x, cps: ControlPointSet, cfg: MlsConfig | None = None) -> float:
    """Weighted residual sum over the control pairs (the ridge term is
    solver regularization, not part of the fit quality)."""
    cfg = cfg or MlsConfig()
    w = weights(x, cps, cfg)
    residuals = cps.u @ m.F + m.b - cps.v  # (n, 3)
    return float((w * (residuals * residuals).sum(axis=1)).sum())


# fixed chunking: depends on the band count only, never on worker count,
# so every pixel is always computed inside the same chunk shape
def _chunk_rows(p: int) -> int:
    return max(16, min(4096, 32_000_000 // (p * p)))


def _batch_colors(X: np.ndarray, cps: ControlPointSet, cfg: MlsConfig, threads: int) -> np.ndarray:
    """Solve and apply the local map for every row of X (all nonzero)."""
    m, p = X.shape
    n = cps.n
    U, V = cps.u, cps.v
    unorm = np.linalg.norm(U, axis=1)
    # flattened outer products let the per-chunk normal matrices and
    # right-hand sides come out of two gemms
    TU = (U[:, :, None] * U[:, None, :]).reshape(n, p * p)
    TV = (U[:, :, None] * V[:, None, :]).reshape(n, p * 3)
    eye = np.eye(p)
    out = np.empty((m, 3), dtype=np.uint8)
    chunk = _chunk_rows(p)

    def solve_chunk(start: int) -> None:
        stop = min(start + chunk, m)
        xc = X[start:stop]
        dots = xc @ U.T
        denom = np.linalg.norm(xc, axis=1)[:, None] * unorm[None, :]
        angles = np.arccos(np.clip(dots / denom, -1.0, 1.0))
        w = 1.0 / np.maximum(angles, cfg.sad_epsilon) ** cfg.weight_exponent
        sw = w.sum(axis=1)
        ubar = (w @ U) / sw[:, None]
        vbar = (w @ V) / sw[:, None]
        normal = (w @ TU).reshape(-1, p, p) - sw[:, None, None] * (ubar[:, :, None] * ubar[:, None, :])
        rhs = (w @ TV).reshape(-1, p, 3) - sw[:, None, None] * (ubar[:, :, None] * vbar[:, None, :])
        if cfg.ridge_lambda > 0:
            trace = np.einsum("ijj->i", normal)
            lam = cfg.ridge_lambda * trace / p
            lam[lam <= 0] = cfg.ridge_lambda
            normal += lam[:, None, None] * eye
        try:
            F = np.linalg.solve(normal, rhs)
        except np.linalg.LinAlgError:
            raise SingularSystemError(
                "normal matrix is singular for some pixel; set ridge_lambda > 0"
            ) from None
        if not np.isfinite(F).all():
            raise SingularSystemError(
                "normal matrix is numerically singular for some pixel; set ridge_lambda > 0"
            )
        b = vbar - (F * ubar[:, :, None]).sum(axis=1)
        y = (F * xc[:, :, None]).sum(axis=1) + b
        out[start:stop] = np.clip(np.rint(y), *OUTPUT_CLAMP).astype(np.uint8)

    starts = range(0, m, chunk)
    if threads == 1 or m <= chunk:
        for s in starts:
            solve_chunk(s)
    else:
        workers = threads if threads > 0 else (os.cpu_count() or 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(solve_chunk, s) for s in starts]:
                future.result()
    return out


def render(
    cube: SpectralCube,
    cps: ControlPointSet,
    cfg: MlsConfig | None = None,
    *,
    threads: int = 0,
    stride: int = 1,
) -> RgbImage:
    """Map every cube pixel through its own local affine solve.

    stride > 1 renders the stride-subsampled cube (preview mode). Pixels
    with all-zero signatures, where the angular weight is undefined, get
    the equal-weight color centroid of the control pairs.
    """
    cfg = cfg or MlsConfig()
    if cube.bands != cps.bands:
        raise BandMismatchError(
            f"cube has {cube.bands} bands but control points have {cps.bands}"
        )
    if stride < 1:
        raise SchemaError(f"stride must be >= 1, got {stride}")
    values = cube.values[::stride, ::stride, :]
    h, w_, p = values.shape
    X = values.reshape(-1, p)
    out = np.empty((h * w_, 3), dtype=np.uint8)
    nonzero = (X != 0).any(axis=1)
    if not nonzero.all():
        fallback = np.clip(np.rint(cps.v.mean(axis=0)), *OUTPUT_CLAMP).astype(np.uint8)
        out[~nonzero] = fallback
    idx = np.nonzero(nonzero)[0]
    if idx.size:
        Xnz = X[idx]
        if cfg.dedup_enabled:
            uniq, inverse = np.unique(Xnz, axis=0, return_inverse=True)
            colors = _batch_colors(uniq, cps, cfg, threads)
            out[idx] = colors[inverse.reshape(-1)]
        else:
            out[idx] = _batch_colors(Xnz, cps, cfg, threads)
    return RgbImage(out.reshape(h, w_, 3))
