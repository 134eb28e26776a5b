"""Command-line entry point.

Exit codes are a stable contract: 0 success, 1 internal failure,
2 input I/O, 3 schema or shape mismatch, 4 bad usage. click's own
argument errors are remapped onto that table, which is why commands run
with standalone_mode disabled.

Each command writes a JSON run report beside its primary output with
the command line, inputs, per-stage timings and warnings.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .cube import read_cube
from .errors import InputIOError, SchemaError, SpectraError, UsageError
from .homography import Homography
from .image import read_rgb, write_rgb
from .matching import DEFAULT_SEED, MatchConfig, build_control_points
from .metrics import entropy, evaluate, rmse_warped
from .mls import MlsConfig, render
from .points import read_control_points, write_control_points


class _Stages:
    """Wall-clock milliseconds per named stage."""

    def __init__(self):
        self.timings: dict[str, float] = {}
        self._mark = time.perf_counter()

    def done(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = round((now - self._mark) * 1000.0, 3)
        self._mark = now


def _write_report(out_path: str | Path, doc: dict) -> Path:
    report_path = Path(str(out_path) + ".report.json")
    report_path.write_text(json.dumps(doc, indent=2) + "\n")
    return report_path


def _match_config(**kwargs) -> MatchConfig:
    try:
        return MatchConfig(**kwargs)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None


def _mls_config(**kwargs) -> MlsConfig:
    try:
        return MlsConfig(**kwargs)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None


@click.group(name="spectra")
def cli():
    """Natural-color visualization of hyperspectral cubes."""


@cli.command("match")
@click.argument("cube_header")
@click.argument("rgb_path")
@click.argument("out_points")
@click.option("--sample-fraction", type=float, default=0.01, show_default=True,
              help="fraction of cube pixels sampled as control points")
@click.option("--window-radius", type=int, default=4, show_default=True,
              help="refinement search radius in pixels")
@click.option("--ratio-threshold", type=float, default=0.8, show_default=True,
              help="nearest/second-nearest acceptance ratio")
@click.option("--ransac-iterations", type=int, default=2000, show_default=True)
@click.option("--ransac-inlier-tol", type=float, default=3.0, show_default=True,
              help="inlier transfer error in pixels")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True,
              help="seed for all randomness in this command")
@click.option("--sensor", default="", help="sensor tag stored with the control points")
@click.option("--threads", type=int, default=0, envvar="SPECTRA_THREADS", show_default=True,
              help="worker threads, 0 = all cores")
def cmd_match(cube_header, rgb_path, out_points, sample_fraction, window_radius,
              ratio_threshold, ransac_iterations, ransac_inlier_tol, seed, sensor, threads):
    """Discover control points between CUBE_HEADER and RGB_PATH."""
    del threads  # matching runs single-threaded; accepted for interface parity
    cfg = _match_config(
        sample_fraction=sample_fraction,
        window_radius=window_radius,
        ratio_threshold=ratio_threshold,
        ransac_iterations=ransac_iterations,
        ransac_inlier_tol=ransac_inlier_tol,
        rng_seed=seed,
    )
    stages = _Stages()
    cube = read_cube(cube_header)
    rgb = read_rgb(rgb_path)
    stages.done("read")
    cps, match_report = build_control_points(cube, rgb, cfg, sensor=sensor)
    stages.done("match")
    write_control_points(cps, out_points)
    stages.done("write")
    report = {
        "command": "match",
        "inputs": [str(cube_header), str(rgb_path)],
        "outputs": [str(out_points)],
        "timingsMs": stages.timings,
        "warnings": [],
        "seed": seed,
        "match": match_report.to_dict(),
    }
    _write_report(out_points, report)
    click.echo(f"wrote {cps.n} control points to {out_points} "
               f"({match_report.skipped_zero_signature} zero-signature, "
               f"{match_report.skipped_out_of_bounds} out-of-bounds skips)")


@cli.command("render")
@click.argument("cube_header")
@click.argument("points_path")
@click.argument("out_png")
@click.option("--ridge-lambda", type=float, default=1e-6, show_default=True,
              help="relative ridge factor; 0 disables regularization")
@click.option("--sad-epsilon", type=float, default=1e-8, show_default=True,
              help="angular clamp floor in radians")
@click.option("--beta", type=float, default=1.0, show_default=True,
              help="weight exponent on the inverse angle")
@click.option("--dedup/--no-dedup", default=True, show_default=True,
              help="solve each distinct signature once")
@click.option("--preview-stride", type=int, default=1, show_default=True,
              help="render every Nth pixel for a quick look")
@click.option("--expect-sensor", default=None,
              help="warn when the points file carries a different sensor tag")
@click.option("--threads", type=int, default=0, envvar="SPECTRA_THREADS", show_default=True,
              help="worker threads, 0 = all cores")
def cmd_render(cube_header, points_path, out_png, ridge_lambda, sad_epsilon, beta,
               dedup, preview_stride, expect_sensor, threads):
    """Render CUBE_HEADER through the control points in POINTS_PATH."""
    cfg = _mls_config(
        ridge_lambda=ridge_lambda,
        sad_epsilon=sad_epsilon,
        weight_exponent=beta,
        dedup_enabled=dedup,
    )
    if preview_stride < 1:
        raise UsageError(f"--preview-stride must be >= 1, got {preview_stride}")
    stages = _Stages()
    cube = read_cube(cube_header)
    cps = read_control_points(points_path)
    stages.done("read")
    warnings = []
    if expect_sensor is not None and cps.sensor != expect_sensor:
        warning = (f"sensor tag mismatch: points file says {cps.sensor!r}, "
                   f"expected {expect_sensor!r}; rendering anyway")
        warnings.append(warning)
        click.echo(f"warning: {warning}", err=True)
    image = render(cube, cps, cfg, threads=threads, stride=preview_stride)
    stages.done("render")
    write_rgb(image, out_png)
    stages.done("write")
    report = {
        "command": "render",
        "inputs": [str(cube_header), str(points_path)],
        "outputs": [str(out_png)],
        "timingsMs": stages.timings,
        "warnings": warnings,
        "config": {
            "ridgeLambda": ridge_lambda,
            "sadEpsilon": sad_epsilon,
            "beta": beta,
            "dedup": dedup,
            "previewStride": preview_stride,
            "threads": threads,
        },
        "controlPoints": cps.n,
    }
    _write_report(out_png, report)
    click.echo(f"rendered {image.width}x{image.height} image to {out_png}")


def _load_homography(path: str) -> Homography:
    p = Path(path)
    if not p.is_file():
        raise InputIOError(f"input not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"homography file is not valid JSON: {exc}") from None
    rows = doc
    if isinstance(doc, dict):
        rows = doc.get("homography")
        if rows is None and isinstance(doc.get("match"), dict):
            rows = doc["match"].get("homography")
    matrix = np.asarray(rows, dtype=np.float64) if rows is not None else None
    if matrix is None or matrix.shape != (3, 3):
        raise SchemaError(f"no 3x3 homography found in {p}")
    return Homography(matrix)


@cli.command("metrics")
@click.argument("rendered_png")
@click.argument("reference_png")
@click.option("--warp-homography", "warp_path", default=None,
              help="JSON file (or match report) whose homography registers "
                   "rendered pixels to the reference")
def cmd_metrics(rendered_png, reference_png, warp_path):
    """Entropy of RENDERED_PNG and RMSE against REFERENCE_PNG."""
    stages = _Stages()
    rendered = read_rgb(rendered_png)
    reference = read_rgb(reference_png)
    stages.done("read")
    if warp_path is None:
        if rendered.values.shape != reference.values.shape:
            raise UsageError(
                f"image sizes differ ({rendered.width}x{rendered.height} vs "
                f"{reference.width}x{reference.height}); pass --warp-homography "
                "to compare registered images"
            )
        result = evaluate(rendered, reference).to_dict()
    else:
        h = _load_homography(warp_path)
        warped_rmse, compared = rmse_warped(rendered, reference, h)
        result = {
            "entropyBits": entropy(rendered),
            "pixelCount": rendered.width * rendered.height,
            "rmse": warped_rmse,
            "comparedPixels": compared,
        }
    stages.done("metrics")
    report = {
        "command": "metrics",
        "inputs": [str(rendered_png), str(reference_png)],
        "outputs": [],
        "timingsMs": stages.timings,
        "warnings": [],
        "metrics": result,
    }
    _write_report(str(rendered_png) + ".metrics", report)
    click.echo(json.dumps(result, indent=2))


def main(argv=None) -> int:
    """Run the CLI, translating exceptions into contract exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.exceptions.Abort:
        return 1
    except click.exceptions.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 4
    except UsageError as exc:
        click.echo(f"error: {exc}", err=True)
        return 4
    except InputIOError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except SchemaError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except SpectraError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # last resort: anything unanticipated is internal
        click.echo(f"internal error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
