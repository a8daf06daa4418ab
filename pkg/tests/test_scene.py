import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctgi import (
    ExposureImage,
    NoiseModel,
    SuperPixelGeometry,
    Video,
    add_noise,
    direct_capture,
    modulate_accumulate,
    upsample_scene,
)
from ctgi.scene import simulate_exposure

from conftest import random_scene


class TestGeometry:
    def test_consistent(self):
        geom = SuperPixelGeometry(m=1024, l=8, n=128)
        assert geom.block_pixels == 64
        assert geom.sliding_side == 1017

    def test_from_block(self):
        assert SuperPixelGeometry.from_block(4, 32) == SuperPixelGeometry(128, 4, 32)

    @pytest.mark.parametrize("m,l,n", [(10, 3, 3), (8, 2, 5), (0, 1, 1)])
    def test_inconsistent_rejected(self, m, l, n):
        with pytest.raises(ValueError):
            SuperPixelGeometry(m=m, l=l, n=n)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            SuperPixelGeometry(m=0, l=0, n=1)


class TestVideo:
    def test_basic(self):
        video = Video(np.zeros((3, 4, 5)))
        assert (video.K, video.height, video.width) == (3, 4, 5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Video(np.zeros((0, 4, 4)))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            Video(np.full((1, 2, 2), -0.5))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Video(np.full((1, 2, 2), np.nan))

    def test_from_uint_normalizes(self):
        video = Video.from_uint(np.array([[[0, 255]], [[51, 102]]], dtype=np.uint8))
        assert video.frames.max() == 1.0
        assert video.frames[1, 0, 0] == pytest.approx(0.2)

    def test_from_uint_rejects_float(self):
        with pytest.raises(ValueError):
            Video.from_uint(np.zeros((1, 2, 2)))


class TestUpsample:
    def test_single_pixel_replication(self):
        geom = SuperPixelGeometry.from_block(2, 1)
        out = upsample_scene(Video(np.array([[[0.5]]])), geom)
        assert np.array_equal(out.frames[0], np.full((2, 2), 0.5))

    def test_block_diagonal(self):
        geom = SuperPixelGeometry.from_block(2, 2)
        frame = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = upsample_scene(Video(frame[None]), geom)
        expected = np.kron(frame, np.ones((2, 2)))
        assert np.array_equal(out.frames[0], expected)

    def test_paper_scale_dimensions(self):
        geom = SuperPixelGeometry.from_block(8, 128)
        out = upsample_scene(random_scene(128, 2, seed=0), geom)
        assert (out.height, out.width) == (1024, 1024)

    def test_blocks_constant(self):
        geom = SuperPixelGeometry.from_block(4, 8)
        out = upsample_scene(random_scene(8, 3, seed=1), geom)
        blocks = out.frames.reshape(3, 8, 4, 8, 4)
        assert np.all(blocks == blocks[:, :, :1, :, :1])

    def test_dimension_mismatch(self):
        geom = SuperPixelGeometry.from_block(2, 4)
        with pytest.raises(ValueError):
            upsample_scene(Video(np.zeros((1, 3, 3))), geom)


class TestModulateAccumulate:
    def test_all_black_video(self, desk_basis):
        video = Video(np.zeros((16, 32, 32)))
        exposure = modulate_accumulate(video, desk_basis)
        assert np.array_equal(exposure.values, np.zeros((32, 32)))

    def test_all_ones_basis_equals_direct_capture(self):
        from ctgi.basis import KIND_RANDOM, ModulationBasis

        geom = SuperPixelGeometry.from_block(2, 2)
        basis = ModulationBasis(
            kind=KIND_RANDOM, geometry=geom, tiles=np.ones((3, 2, 2), dtype=np.uint8)
        )
        video = random_scene(2, 3, seed=5)
        big = upsample_scene(video, geom)
        exposure = modulate_accumulate(big, basis)
        assert np.allclose(exposure.values, direct_capture(big), rtol=0, atol=0)

    def test_frame_count_mismatch(self, desk_basis):
        with pytest.raises(ValueError, match="16 patterns"):
            modulate_accumulate(Video(np.zeros((3, 32, 32))), desk_basis)

    def test_dimension_mismatch(self, desk_basis):
        with pytest.raises(ValueError, match="upsample"):
            modulate_accumulate(Video(np.zeros((16, 8, 8))), desk_basis)

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        a=st.floats(0.0, 4.0),
        b=st.floats(0.0, 4.0),
    )
    def test_linearity(self, desk_basis, seed, a, b):
        rng = np.random.default_rng(seed)
        f1 = rng.random((16, 32, 32))
        f2 = rng.random((16, 32, 32))
        s1 = modulate_accumulate(Video(f1), desk_basis).values
        s2 = modulate_accumulate(Video(f2), desk_basis).values
        combined = modulate_accumulate(Video(a * f1 + b * f2), desk_basis).values
        expected = a * s1 + b * s2
        scale = max(np.abs(expected).max(), 1.0)
        assert np.abs(combined - expected).max() <= 1e-12 * scale

    def test_masking_bound(self, desk_basis, desk_scene):
        big = upsample_scene(desk_scene, desk_basis.geometry)
        exposure = modulate_accumulate(big, desk_basis)
        blur = direct_capture(big)
        assert np.all(exposure.values >= 0)
        assert np.all(exposure.values <= blur + 1e-15)

    def test_repeat_runs_bit_identical(self, desk_scene, desk_basis):
        big = upsample_scene(desk_scene, desk_basis.geometry)
        first = modulate_accumulate(big, desk_basis).values
        second = modulate_accumulate(big, desk_basis).values
        assert np.array_equal(first, second)

    def test_on_the_fly_upsampling_bit_identical(self, desk_scene, desk_basis):
        via_upsample = modulate_accumulate(
            upsample_scene(desk_scene, desk_basis.geometry), desk_basis
        )
        direct = simulate_exposure(desk_scene, desk_basis)
        assert np.array_equal(via_upsample.values, direct.values)


class TestDirectCapture:
    def test_single_frame(self):
        frame = np.array([[0.1, 0.2], [0.3, 0.4]])
        assert np.array_equal(direct_capture(Video(frame[None])), frame)

    def test_identical_frames_scale(self):
        frame = np.random.default_rng(0).random((4, 4))
        video = Video(np.stack([frame] * 5))
        assert np.allclose(direct_capture(video), 5 * frame, rtol=1e-15)

    def test_moving_object_is_summed(self):
        frames = np.zeros((3, 3, 3))
        for k in range(3):
            frames[k, k, k] = 1.0
        blur = direct_capture(Video(frames))
        # brute-force pixelwise summation oracle
        expected = np.zeros((3, 3))
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    expected[i, j] += frames[k, i, j]
        assert np.array_equal(blur, expected)


class TestNoise:
    def _exposure(self):
        geom = SuperPixelGeometry.from_block(2, 2)
        values = np.random.default_rng(3).random((4, 4)) * 4
        return ExposureImage(values, geom)

    def test_none_is_identity(self):
        exposure = self._exposure()
        assert add_noise(exposure, NoiseModel()) is exposure

    def test_zero_sigma_is_identity(self):
        exposure = self._exposure()
        model = NoiseModel(kind="additive-gaussian", sigma=0.0, seed=1)
        assert add_noise(exposure, model) is exposure

    def test_fixed_seed_reproducible(self):
        exposure = self._exposure()
        model = NoiseModel(kind="additive-gaussian", sigma=0.01, seed=99)
        first = add_noise(exposure, model)
        second = add_noise(exposure, model)
        assert np.array_equal(first.values, second.values)
        assert first.noise_meta == model

    def test_poisson_reproducible_and_clamped(self):
        exposure = self._exposure()
        model = NoiseModel(kind="poisson", scale=100.0, seed=7)
        first = add_noise(exposure, model)
        second = add_noise(exposure, model)
        assert np.array_equal(first.values, second.values)
        assert first.values.min() >= 0

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            NoiseModel(kind="additive-gaussian", sigma=-1.0)
        with pytest.raises(ValueError):
            NoiseModel(kind="poisson", scale=0.0)
        with pytest.raises(ValueError):
            NoiseModel(kind="salt-and-pepper")


class TestExposureImage:
    def test_shape_checked(self):
        geom = SuperPixelGeometry.from_block(2, 2)
        with pytest.raises(ValueError):
            ExposureImage(np.zeros((3, 3)), geom)

    def test_negative_rejected(self):
        geom = SuperPixelGeometry.from_block(2, 1)
        with pytest.raises(ValueError):
            ExposureImage(np.full((2, 2), -1.0), geom)
