"""Scale-space keypoint detection and gradient-histogram descriptors.

Difference-of-Gaussians pyramid, quadratic sub-pixel localization,
orientation assignment from a smoothed 36-bin gradient histogram, and
the classic 4x4x8 descriptor with trilinear scatter. Everything is
plain numpy + scipy.ndimage and fully deterministic for a fixed input:
no random sampling, and histogram accumulation uses sequential
index-ordered adds.

Gradient convention everywhere: dx along columns, dy along rows flipped
so that +y points up; angle = atan2(dy, dx) in [0, 2pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import SchemaError

MIN_IMAGE_SIDE = 16

_INTERVALS = 3  # DoG layers searched per octave
_BASE_SIGMA = 1.6
_ASSUMED_BLUR = 0.5  # blur already present in the input
_CONTRAST_THRESHOLD = 0.04
_EDGE_RATIO = 10.0
_BORDER = 5  # candidate exclusion margin, pixels
_MAX_LOCALIZE_STEPS = 5
_DESC_WIDTH = 4  # spatial histogram grid
_DESC_BINS = 8
_DESC_CLIP = 0.2
_PATCH_SIGMA = 1.6  # fixed descriptor scale for window refinement


@dataclass(frozen=True)
class Keypoint:
    """Sub-pixel feature with a unit-L2 128-vector descriptor."""

    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray
    response: float = 0.0

    def __post_init__(self):
        d = np.ascontiguousarray(self.descriptor, dtype=np.float64)
        if d.shape != (_DESC_WIDTH * _DESC_WIDTH * _DESC_BINS,):
            raise SchemaError(f"descriptor must have {_DESC_WIDTH * _DESC_WIDTH * _DESC_BINS} entries")
        norm = float(np.linalg.norm(d))
        if not (0.99 <= norm <= 1.01):
            raise SchemaError(f"descriptor norm {norm} outside [0.99, 1.01]")
        if (d < 0).any():
            raise SchemaError("descriptor entries must be non-negative")
        d.flags.writeable = False
        object.__setattr__(self, "descriptor", d)
        if not (self.scale > 0):
            raise SchemaError(f"scale must be positive, got {self.scale}")


def _normalized_gray(image) -> np.ndarray:
    gray = np.asarray(image, dtype=np.float64)
    if gray.ndim != 2:
        raise SchemaError(f"expected a single-channel raster, got shape {gray.shape}")
    lo = gray.min()
    hi = gray.max()
    if hi > lo:
        gray = (gray - lo) / (hi - lo)
    else:
        gray = np.zeros_like(gray)
    return gray


def _base_image(gray: np.ndarray) -> np.ndarray:
    # x2 bilinear upsample, then top up the blur to _BASE_SIGMA assuming
    # the doubled image carries 2 * _ASSUMED_BLUR
    up = ndimage.zoom(gray, 2.0, order=1, mode="nearest", grid_mode=True)
    delta = math.sqrt(max(_BASE_SIGMA**2 - (2.0 * _ASSUMED_BLUR) ** 2, 0.01))
    return ndimage.gaussian_filter(up, delta)


def _blur_increments() -> list[float]:
    k = 2.0 ** (1.0 / _INTERVALS)
    increments = []
    prev = _BASE_SIGMA
    for _ in range(_INTERVALS + 2):
        total = prev * k
        increments.append(math.sqrt(total**2 - prev**2))
        prev = total
    return increments


def _gaussian_octaves(base: np.ndarray, n_octaves: int) -> list[list[np.ndarray]]:
    increments = _blur_increments()
    octaves = []
    current = base
    for _ in range(n_octaves):
        layers = [current]
        for inc in increments:
            layers.append(ndimage.gaussian_filter(layers[-1], inc))
        octaves.append(layers)
        # the layer with exactly twice the base blur seeds the next octave
        current = layers[-3][::2, ::2]
    return octaves


def _extremum_candidates(dogs: np.ndarray) -> np.ndarray:
    """(layer, row, col) indices of 26-neighborhood extrema above the
    contrast pre-filter, away from the border."""
    threshold = 0.5 * _CONTRAST_THRESHOLD / _INTERVALS
    maxf = ndimage.maximum_filter(dogs, size=3, mode="nearest")
    minf = ndimage.minimum_filter(dogs, size=3, mode="nearest")
    is_ext = ((dogs == maxf) & (dogs > threshold)) | ((dogs == minf) & (dogs < -threshold))
    is_ext[0] = False
    is_ext[-1] = False
    is_ext[:, :_BORDER] = False
    is_ext[:, -_BORDER:] = False
    is_ext[:, :, :_BORDER] = False
    is_ext[:, :, -_BORDER:] = False
    return np.argwhere(is_ext)


def _localize(dogs: np.ndarray, layer: int, row: int, col: int):
    """Quadratic sub-pixel fit; returns (layer_f, row_f, col_f, contrast)
    or None when the candidate drifts away or fails the filters."""
    n_layers, h, w = dogs.shape
    for _ in range(_MAX_LOCALIZE_STEPS):
        cube = dogs[layer - 1 : layer + 2, row - 1 : row + 2, col - 1 : col + 2]
        grad = 0.5 * np.array(
            [
                cube[2, 1, 1] - cube[0, 1, 1],
                cube[1, 2, 1] - cube[1, 0, 1],
                cube[1, 1, 2] - cube[1, 1, 0],
            ]
        )
        center = cube[1, 1, 1]
        dss = cube[2, 1, 1] - 2 * center + cube[0, 1, 1]
        dyy = cube[1, 2, 1] - 2 * center + cube[1, 0, 1]
        dxx = cube[1, 1, 2] - 2 * center + cube[1, 1, 0]
        dsy = 0.25 * (cube[2, 2, 1] - cube[2, 0, 1] - cube[0, 2, 1] + cube[0, 0, 1])
        dsx = 0.25 * (cube[2, 1, 2] - cube[2, 1, 0] - cube[0, 1, 2] + cube[0, 1, 0])
        dyx = 0.25 * (cube[1, 2, 2] - cube[1, 2, 0] - cube[1, 0, 2] + cube[1, 0, 0])
        hessian = np.array([[dss, dsy, dsx], [dsy, dyy, dyx], [dsx, dyx, dxx]])
        try:
            offset = -np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            return None
        if (np.abs(offset) < 0.5).all():
            contrast = center + 0.5 * float(grad @ offset)
            if abs(contrast) * _INTERVALS < _CONTRAST_THRESHOLD:
                return None
            # reject edge-like responses via the spatial hessian
            trace = dxx + dyy
            det = dxx * dyy - dyx * dyx
            if det <= 0 or trace * trace * _EDGE_RATIO >= (_EDGE_RATIO + 1) ** 2 * det:
                return None
            return (layer + offset[0], row + offset[1], col + offset[2], contrast)
        layer += int(round(offset[0]))
        row += int(round(offset[1]))
        col += int(round(offset[2]))
        if not (1 <= layer <= n_layers - 2 and _BORDER <= row < h - _BORDER and _BORDER <= col < w - _BORDER):
            return None
    return None


class _GradientField:
    """Cached magnitude/angle of an image, +y up convention."""

    def __init__(self, image: np.ndarray):
        dy_down, dx = np.gradient(image)
        dy = -dy_down
        self.magnitude = np.hypot(dx, dy)
        self.angle = np.mod(np.arctan2(dy, dx), 2.0 * np.pi)
        self.shape = image.shape


def _orientation_histogram(field: _GradientField, row: int, col: int, sigma: float) -> np.ndarray:
    radius = int(round(3.0 * 1.5 * sigma))
    h, w = field.shape
    r0, r1 = max(row - radius, 0), min(row + radius, h - 1)
    c0, c1 = max(col - radius, 0), min(col + radius, w - 1)
    rr, cc = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
    weight = np.exp(-((rr - row) ** 2 + (cc - col) ** 2) / (2.0 * (1.5 * sigma) ** 2))
    mag = field.magnitude[rr, cc] * weight
    bins = np.floor(field.angle[rr, cc] * (36 / (2.0 * np.pi))).astype(np.intp) % 36
    raw = np.zeros(36)
    np.add.at(raw, bins.reshape(-1), mag.reshape(-1))
    # circular smoothing with the binomial kernel 1 4 6 4 1
    smooth = (
        6 * raw
        + 4 * (np.roll(raw, 1) + np.roll(raw, -1))
        + np.roll(raw, 2)
        + np.roll(raw, -2)
    ) / 16.0
    return smooth


def _peak_orientations(hist: np.ndarray) -> list[float]:
    peak_floor = 0.8 * hist.max()
    left = np.roll(hist, 1)
    right = np.roll(hist, -1)
    out = []
    for i in np.nonzero((hist > left) & (hist > right) & (hist >= peak_floor))[0]:
        l, c, r = left[i], hist[i], right[i]
        interp = (i + 0.5 * (l - r) / (l - 2 * c + r)) % 36
        out.append(float(interp * (2.0 * np.pi / 36)))
    return out


def _descriptor(field: _GradientField, cx: float, cy: float, sigma: float, orientation: float) -> np.ndarray:
    """4x4x8 gradient histogram around (cx, cy), rotated to the keypoint
    frame, trilinearly scattered, normalized, clipped and renormalized.
    Returns the zero vector when the window carries no gradient energy."""
    h, w = field.shape
    hist_width = 3.0 * sigma
    radius = int(round(hist_width * math.sqrt(2) * (_DESC_WIDTH + 1) * 0.5))
    radius = min(radius, int(math.sqrt(h * h + w * w)))
    row, col = int(round(cy)), int(round(cx))
    r0, r1 = max(row - radius, 0), min(row + radius, h - 1)
    c0, c1 = max(col - radius, 0), min(col + radius, w - 1)
    if r0 > r1 or c0 > c1:
        return np.zeros(_DESC_WIDTH * _DESC_WIDTH * _DESC_BINS)
    rr, cc = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
    dr = rr - cy
    dc = cc - cx
    cos_t = math.cos(orientation)
    sin_t = math.sin(orientation)
    row_rot = dc * sin_t + dr * cos_t
    col_rot = dc * cos_t - dr * sin_t
    row_bin = row_rot / hist_width + 0.5 * _DESC_WIDTH - 0.5
    col_bin = col_rot / hist_width + 0.5 * _DESC_WIDTH - 0.5
    keep = (row_bin > -1) & (row_bin < _DESC_WIDTH) & (col_bin > -1) & (col_bin < _DESC_WIDTH)
    if not keep.any():
        return np.zeros(_DESC_WIDTH * _DESC_WIDTH * _DESC_BINS)
    row_bin = row_bin[keep]
    col_bin = col_bin[keep]
    weight = np.exp(
        -0.5 / (0.5 * _DESC_WIDTH) ** 2 * ((row_rot[keep] / hist_width) ** 2 + (col_rot[keep] / hist_width) ** 2)
    )
    mag = field.magnitude[rr, cc][keep] * weight
    theta = np.mod(field.angle[rr, cc][keep] - orientation, 2.0 * np.pi)
    ori_bin = theta * (_DESC_BINS / (2.0 * np.pi))

    rf = np.floor(row_bin).astype(np.intp)
    cf = np.floor(col_bin).astype(np.intp)
    of = np.floor(ori_bin).astype(np.intp)
    dr_f = row_bin - rf
    dc_f = col_bin - cf
    do_f = ori_bin - of
    hist = np.zeros((_DESC_WIDTH + 2, _DESC_WIDTH + 2, _DESC_BINS))
    for r_step, r_w in ((0, 1.0 - dr_f), (1, dr_f)):
        for c_step, c_w in ((0, 1.0 - dc_f), (1, dc_f)):
            for o_step, o_w in ((0, 1.0 - do_f), (1, do_f)):
                np.add.at(
                    hist,
                    (rf + 1 + r_step, cf + 1 + c_step, (of + o_step) % _DESC_BINS),
                    mag * r_w * c_w * o_w,
                )
    desc = hist[1:-1, 1:-1, :].reshape(-1)
    norm = np.linalg.norm(desc)
    if norm < 1e-12:
        return np.zeros(desc.size)
    desc = np.minimum(desc / norm, _DESC_CLIP)
    norm = np.linalg.norm(desc)
    return desc / norm


def detect_keypoints(image) -> list[Keypoint]:
    """Find scale-space extrema with descriptors, in input-image
    coordinates. Sorted by (x, y, scale, orientation); exact duplicates
    dropped. A constant image yields an empty list."""
    gray = _normalized_gray(image)
    if min(gray.shape) < MIN_IMAGE_SIDE:
        raise SchemaError(
            f"image too small for keypoint detection: {gray.shape[1]}x{gray.shape[0]}, "
            f"need at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
        )
    if not gray.any():
        return []
    base = _base_image(gray)
    n_octaves = max(int(round(math.log2(min(base.shape)))) - 1, 1)
    octaves = _gaussian_octaves(base, n_octaves)

    found = []
    for octave_index, layers in enumerate(octaves):
        dogs = np.stack([b - a for a, b in zip(layers, layers[1:])])
        if min(dogs.shape[1:]) <= 2 * _BORDER:
            continue
        fields: dict[int, _GradientField] = {}
        for layer, row, col in _extremum_candidates(dogs):
            located = _localize(dogs, layer, row, col)
            if located is None:
                continue
            layer_f, row_f, col_f, contrast = located
            octave_scale = float(2**octave_index)
            sigma_oct = _BASE_SIGMA * 2.0 ** (layer_f / _INTERVALS)
            nearest_layer = min(max(int(round(layer_f)), 1), _INTERVALS)
            if nearest_layer not in fields:
                fields[nearest_layer] = _GradientField(layers[nearest_layer])
            field = fields[nearest_layer]
            hist = _orientation_histogram(field, int(round(row_f)), int(round(col_f)), sigma_oct)
            if hist.max() <= 0:
                continue
            for orientation in _peak_orientations(hist):
                desc = _descriptor(field, col_f, row_f, sigma_oct, orientation)
                if not desc.any():
                    continue
                # halve everything to undo the x2 base upsampling
                found.append(
                    Keypoint(
                        x=col_f * octave_scale / 2.0,
                        y=row_f * octave_scale / 2.0,
                        scale=sigma_oct * octave_scale / 2.0,
                        orientation=orientation,
                        descriptor=desc,
                        response=abs(contrast),
                    )
                )
    found.sort(key=lambda k: (k.x, k.y, k.scale, k.orientation))
    unique = []
    for kp in found:
        if unique:
            prev = unique[-1]
            if (prev.x, prev.y, prev.scale, prev.orientation) == (kp.x, kp.y, kp.scale, kp.orientation):
                continue
        unique.append(kp)
    return unique


class PatchDescriptorExtractor:
    """Fixed-scale, zero-orientation descriptors at arbitrary positions.

    Blurs the image once up front so that sweeping a search window costs
    one histogram per position, not one filter pass per position. Both
    sides of a refinement comparison must use this same construction.
    """

    def __init__(self, image, sigma: float = _PATCH_SIGMA):
        gray = _normalized_gray(image)
        self.sigma = sigma
        self._field = _GradientField(ndimage.gaussian_filter(gray, sigma))

    @property
    def shape(self) -> tuple[int, int]:
        return self._field.shape

    def descriptor(self, x: float, y: float) -> np.ndarray:
        """May be the zero vector in featureless regions; callers break
        those ties by window proximity."""
        return _descriptor(self._field, x, y, self.sigma, 0.0)


def patch_descriptor(image, x: float, y: float) -> np.ndarray:
    return PatchDescriptorExtractor(image).descriptor(x, y)
