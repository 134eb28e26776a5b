"""Natural-color visualization of hyperspectral images.

Colors are transferred from a reference RGB image: matched
signature/color pairs anchor a moving least squares fit that gives
every spectral signature its own affine map into RGB, weighted by
inverse spectral angle.
"""

from .cube import CubeHeader, SpectralCube, parse_cube_header, read_cube, write_cube
from .errors import (
    BandMismatchError,
    InputIOError,
    MatchingError,
    OutOfBoundsError,
    SchemaError,
    SingularSystemError,
    SpectraError,
    UsageError,
    ZeroSignatureError,
)
from .features import Keypoint, PatchDescriptorExtractor, detect_keypoints, patch_descriptor
from .homography import Homography, estimate_homography, fit_homography
from .image import RgbImage, decode_rgb, encode_png, luminance, read_rgb, write_rgb
from .matching import (
    DEFAULT_SEED,
    MatchConfig,
    MatchReport,
    build_control_points,
    cube_proxy,
    match_descriptors,
    refine_match,
    rgb_proxy,
)
from .metrics import MetricReport, entropy, evaluate, rmse, rmse_warped
from .mls import (
    AffineColorMap,
    MlsConfig,
    apply_map,
    apply_map_unclamped,
    objective,
    render,
    sad,
    solve_affine,
    weighted_centroids,
    weights,
)
from .points import (
    ControlPointSet,
    parse_control_points,
    read_control_points,
    serialize_control_points,
    write_control_points,
)

__version__ = "0.1.0"

__all__ = [
    "AffineColorMap",
    "BandMismatchError",
    "ControlPointSet",
    "CubeHeader",
    "DEFAULT_SEED",
    "Homography",
    "InputIOError",
    "Keypoint",
    "MatchConfig",
    "MatchReport",
    "MatchingError",
    "MetricReport",
    "MlsConfig",
    "OutOfBoundsError",
    "PatchDescriptorExtractor",
    "RgbImage",
    "SchemaError",
    "SingularSystemError",
    "SpectralCube",
    "SpectraError",
    "UsageError",
    "ZeroSignatureError",
    "apply_map",
    "apply_map_unclamped",
    "build_control_points",
    "cube_proxy",
    "decode_rgb",
    "detect_keypoints",
    "encode_png",
    "entropy",
    "estimate_homography",
    "evaluate",
    "fit_homography",
    "luminance",
    "match_descriptors",
    "objective",
    "parse_control_points",
    "parse_cube_header",
    "patch_descriptor",
    "read_control_points",
    "read_cube",
    "read_rgb",
    "refine_match",
    "render",
    "rgb_proxy",
    "rmse",
    "rmse_warped",
    "sad",
    "serialize_control_points",
    "solve_affine",
    "weighted_centroids",
    "weights",
    "write_control_points",
    "write_cube",
    "write_rgb",
]
