"""Descriptor matching, window refinement, and the pairing pipeline."""

import numpy as np
import pytest

from conftest import blob_texture
from spectramls import (
    Homography,
    Keypoint,
    MatchConfig,
    MatchingError,
    OutOfBoundsError,
    RgbImage,
    SpectralCube,
    build_control_points,
    match_descriptors,
    refine_match,
)


def kp(direction, at=(0.0, 0.0)):
    d = np.zeros(128)
    for i, v in direction.items():
        d[i] = v
    d /= np.linalg.norm(d)
    return Keypoint(x=at[0], y=at[1], scale=1.0, orientation=0.0, descriptor=d)


@pytest.fixture(scope="module")
def scene():
    """Cube and reference drawn from one texture, perfectly aligned."""
    tex = blob_texture(42, size=96, smooth=2.5)
    bands = np.stack([tex * (40.0 + 20.0 * b) + 5.0 for b in range(4)], axis=-1)
    rgb = np.rint(np.stack([tex * 255.0, tex * 200.0, tex * 150.0], axis=-1))
    return SpectralCube(bands), RgbImage(rgb)


class TestRatioTest:
    def test_clear_winner_accepted(self):
        a = [kp({0: 1.0})]
        b = [kp({0: 1.0, 1: 0.1}), kp({5: 1.0})]
        out = match_descriptors(a, b)
        assert len(out) == 1
        ia, ib, dist = out[0]
        assert (ia, ib) == (0, 0)
        assert dist < 0.2

    def test_ambiguous_rejected(self):
        a = [kp({0: 1.0})]
        b = [kp({1: 1.0}), kp({2: 1.0})]  # equidistant from a
        assert match_descriptors(a, b) == []

    def test_single_candidate_always_accepted(self):
        a = [kp({0: 1.0})]
        b = [kp({7: 1.0})]  # far away, but unopposed
        out = match_descriptors(a, b)
        assert len(out) == 1

    def test_exact_duplicate_candidates_rejected(self):
        a = [kp({0: 1.0})]
        b = [kp({0: 1.0}), kp({0: 1.0})]
        assert match_descriptors(a, b) == []

    def test_empty_inputs(self):
        assert match_descriptors([], [kp({0: 1.0})]) == []
        assert match_descriptors([kp({0: 1.0})], []) == []

    def test_sorted_by_distance(self):
        a = [kp({0: 1.0, 1: 0.4}), kp({0: 1.0})]
        b = [kp({0: 1.0}), kp({9: 1.0})]
        out = match_descriptors(a, b)
        assert len(out) == 2
        assert out[0][2] <= out[1][2]
        assert out[0][0] == 1  # the exact copy wins first place

    def test_threshold_is_strict(self):
        cfg = MatchConfig(ratio_threshold=0.5)
        a = [kp({0: 1.0})]
        b = [kp({0: 1.0, 1: 0.5}), kp({0: 1.0, 1: 0.6})]
        assert match_descriptors(a, b, cfg) == []


class TestRefine:
    def test_identity_alignment_is_a_fixed_point(self, scene):
        cube, rgb = scene
        eye = Homography(np.eye(3))
        for pixel in [(30, 40), (55, 21), (70, 66)]:
            assert refine_match(cube, rgb, eye, pixel) == pixel

    def test_radius_zero_takes_the_projection(self, scene):
        cube, rgb = scene
        shift = np.eye(3)
        shift[0, 2] = 4.6
        got = refine_match(cube, rgb, Homography(shift), (20, 30), MatchConfig(window_radius=0))
        assert got == (25, 30)  # round(24.6), no search

    def test_known_translation_is_undone(self, scene):
        cube, rgb = scene
        # reference cropped 6 right and 2 down: cube (x, y) sits at (x-6, y-2)
        cropped = RgbImage(rgb.values[2:, 6:])
        # start from a deliberately sloppy projection one pixel off
        sloppy = np.eye(3)
        sloppy[0, 2], sloppy[1, 2] = -7.0, -1.0
        assert refine_match(cube, cropped, Homography(sloppy), (40, 50)) == (34, 48)

    def test_far_outside_raises(self, scene):
        cube, rgb = scene
        jump = np.eye(3)
        jump[0, 2] = 500.0
        with pytest.raises(OutOfBoundsError, match="outside"):
            refine_match(cube, rgb, Homography(jump), (10, 10))


class TestPipeline:
    def test_aligned_scene_end_to_end(self, scene):
        cube, rgb = scene
        cfg = MatchConfig(sample_fraction=0.005, rng_seed=1729)
        cps, report = build_control_points(cube, rgb, cfg, sensor="bench")
        assert cps.n >= 10
        assert cps.sensor == "bench"
        h = np.array(report.homography)
        assert np.abs(h - np.eye(3)).max() < 0.01
        assert report.pairs == cps.n
        assert report.sampled_pixels == int(np.ceil(0.005 * 96 * 96))
        assert (
            report.sampled_pixels
            == report.pairs + report.skipped_zero_signature + report.skipped_out_of_bounds
        )

    def test_emitted_rows_are_bit_exact_copies(self, scene):
        cube, rgb = scene
        cfg = MatchConfig(sample_fraction=0.005, rng_seed=1729)
        cps, _ = build_control_points(cube, rgb, cfg)
        for row, (x, y) in zip(cps.u, cps.hsi_pixels):
            assert np.array_equal(row, cube.values[y, x])
        for color, (rx, ry) in zip(cps.v, cps.rgb_pixels):
            assert np.array_equal(color, rgb.values[ry, rx].astype(np.float64))

    def test_refined_positions_stay_near_home(self, scene):
        cube, rgb = scene
        cfg = MatchConfig(sample_fraction=0.005, rng_seed=1729)
        cps, _ = build_control_points(cube, rgb, cfg)
        for (x, y), (rx, ry) in zip(cps.hsi_pixels, cps.rgb_pixels):
            assert abs(rx - x) <= cfg.window_radius + 1
            assert abs(ry - y) <= cfg.window_radius + 1

    def test_two_runs_agree_exactly(self, scene):
        cube, rgb = scene
        cfg = MatchConfig(sample_fraction=0.005, rng_seed=7)
        a, ra = build_control_points(cube, rgb, cfg)
        b, rb = build_control_points(cube, rgb, cfg)
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.v, b.v)
        assert a.hsi_pixels == b.hsi_pixels
        assert a.rgb_pixels == b.rgb_pixels
        assert ra.to_dict() == rb.to_dict()

    def test_sample_count_uses_the_ceiling(self, scene):
        cube, rgb = scene
        cfg = MatchConfig(sample_fraction=1e-6, window_radius=1)
        cps, report = build_control_points(cube, rgb, cfg)
        assert report.sampled_pixels == 1
        assert cps.n == 1

    def test_zero_block_is_skipped(self, scene):
        cube, rgb = scene
        values = cube.values.copy()
        values[:16, :16, :] = 0.0
        holed = SpectralCube(values)
        cfg = MatchConfig(sample_fraction=0.05, window_radius=1, rng_seed=3)
        cps, report = build_control_points(holed, rgb, cfg)
        assert report.skipped_zero_signature > 0
        assert report.pairs == cps.n
        assert (cps.u != 0).any(axis=1).all()

    def test_partial_reference_coverage_is_skipped_not_fatal(self, scene):
        cube, rgb = scene
        half = RgbImage(rgb.values[:, :48])
        cfg = MatchConfig(sample_fraction=0.02, window_radius=1, rng_seed=5)
        cps, report = build_control_points(cube, half, cfg)
        assert report.skipped_out_of_bounds > 0
        assert cps.n > 0
        assert all(rx < 48 for rx, _ in cps.rgb_pixels)

    def test_featureless_reference_raises(self):
        cube = SpectralCube(np.random.default_rng(0).uniform(1, 50, (48, 48, 3)))
        flat = RgbImage(np.full((48, 48, 3), 128, dtype=np.uint8))
        with pytest.raises(MatchingError):
            build_control_points(cube, flat)
