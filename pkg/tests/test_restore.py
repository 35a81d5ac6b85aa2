"""Deconvolution, edge restoration, backends, and the frame pipeline."""

import os
import stat
import sys
import textwrap

import numpy as np
import pytest

from conftest import RolledTextureSource, gray_to_frame, smooth_texture
from deblurkit.errors import BackendError, InputError, ParameterError
from deblurkit.focusmetrics import lap1
from deblurkit.imagecore import box_kernel, convolve2d, gaussian_psf, to_grayscale
from deblurkit.quality import psnr
from deblurkit.restore import (
    PipelineConfig,
    ReeConfig,
    RestorerSpec,
    Triplet,
    parallel_map,
    read_pipeline_csv,
    ree,
    restore_frame,
    richardson_lucy,
    run_pipeline,
    write_pipeline_csv,
)
from deblurkit.synth import SynthConfig, synthesize
from oracles import ref_richardson_lucy


def delta_psf(size=5):
    psf = np.zeros((size, size))
    psf[size // 2, size // 2] = 1.0
    return psf


def quantize16(frame):
    return np.rint(np.clip(frame, 0.0, 1.0) * 65535.0) / 65535.0


class TestRichardsonLucy:
    def test_one_by_one_psf_is_identity(self):
        rng = np.random.default_rng(81)
        img = rng.random((12, 12))
        for iterations in (1, 5, 20):
            out = richardson_lucy(img, np.array([[1.0]]), iterations)
            assert np.array_equal(out, img)

    def test_delta_psf_is_identity_bitwise(self):
        rng = np.random.default_rng(82)
        img = rng.random((16, 16))
        out = richardson_lucy(img, delta_psf(), iterations=7)
        assert np.array_equal(out, img)

    def test_constant_image_is_a_fixed_point_bitwise(self):
        # Multiplying by a power of two only shifts exponents, so blurring a
        # dyadic constant yields exactly c * sum(psf) = c in every summation
        # order, the ratio is exactly 1, and the fixed point is bit-exact.
        for value in (0.5, 0.25):
            img = np.full((20, 20), value)
            out = richardson_lucy(img, gaussian_psf(9, 1.5), iterations=5)
            assert np.array_equal(out, img)

    def test_generic_constant_stays_constant_to_rounding(self):
        # For a non-dyadic constant each kernel product rounds separately,
        # so exactness degrades to a few ulp per iteration.
        img = np.full((20, 20), 0.37)
        out = richardson_lucy(img, gaussian_psf(9, 1.5), iterations=5)
        np.testing.assert_allclose(out, img, atol=1e-12)

    def test_gaussian_blur_recovered_by_two_db(self, deconvolution_corpus):
        sharp = deconvolution_corpus["soft_disk"]
        psf = gaussian_psf(9, 1.5)
        blurred = convolve2d(sharp, psf, padding="reflect")
        restored = richardson_lucy(blurred, psf, iterations=10)
        assert psnr(restored, sharp) >= psnr(blurred, sharp) + 2.0

    def test_mse_non_increasing_over_ten_iterations(self, deconvolution_corpus):
        psf = gaussian_psf(9, 1.5)
        for name, sharp in deconvolution_corpus.items():
            blurred = convolve2d(sharp, psf, padding="reflect")
            errors = []
            for iterations in range(1, 11):
                estimate = richardson_lucy(blurred, psf, iterations)
                errors.append(float(np.mean((estimate - sharp) ** 2)))
            assert all(a >= b - 1e-15 for a, b in zip(errors, errors[1:])), name

    def test_flux_conserved_with_periodic_boundary(self):
        rng = np.random.default_rng(83)
        img = rng.random((24, 24)) + 0.05
        psf = gaussian_psf(7, 1.0)
        total = img.sum()
        for iterations in (1, 3, 8):
            out = richardson_lucy(img, psf, iterations, boundary="periodic")
            assert out.sum() == pytest.approx(total, rel=1e-6)

    def test_matches_oracle(self):
        rng = np.random.default_rng(84)
        img = rng.random((16, 16)) + 0.1
        psf = gaussian_psf(5, 1.0)
        got = richardson_lucy(img, psf, iterations=3)
        want = ref_richardson_lucy(img, psf, iterations=3)
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_color_frames_process_per_channel(self):
        rng = np.random.default_rng(85)
        frame = rng.random((14, 14, 3))
        psf = gaussian_psf(5, 1.0)
        out = richardson_lucy(frame, psf, iterations=3)
        for channel in range(3):
            expected = richardson_lucy(frame[:, :, channel], psf, iterations=3)
            assert np.array_equal(out[:, :, channel], expected)

    def test_total_variation_damps_the_update(self, deconvolution_corpus):
        sharp = deconvolution_corpus["smooth_noise"]
        psf = gaussian_psf(9, 1.5)
        blurred = convolve2d(sharp, psf, padding="reflect")
        plain = richardson_lucy(blurred, psf, iterations=5)
        damped = richardson_lucy(blurred, psf, iterations=5, tv_weight=0.02)
        assert not np.array_equal(plain, damped)
        assert (damped >= 0.0).all()

    def test_negative_input_rejected(self):
        img = np.zeros((8, 8))
        img[0, 0] = -0.1
        with pytest.raises(InputError):
            richardson_lucy(img, delta_psf(), 1)

    def test_unnormalized_psf_rejected(self):
        with pytest.raises(ParameterError):
            richardson_lucy(np.ones((8, 8)), np.ones((3, 3)), 1)

    def test_bad_iterations_rejected(self):
        with pytest.raises(ParameterError):
            richardson_lucy(np.ones((8, 8)), delta_psf(), iterations=-1)
        with pytest.raises(ParameterError):
            richardson_lucy(np.ones((8, 8)), delta_psf(), iterations=2.5)


class TestReeConfig:
    def test_defaults(self):
        cfg = ReeConfig()
        assert cfg.psf.shape == (9, 9)
        assert cfg.iterations == 5
        assert cfg.tv_weight == 0.0
        assert cfg.boundary == "reflect"

    def test_validation(self):
        with pytest.raises(ParameterError):
            ReeConfig(iterations=0)
        with pytest.raises(ParameterError):
            ReeConfig(tv_weight=1.0)
        with pytest.raises(ParameterError):
            ReeConfig(epsilon=0.0)
        with pytest.raises(ParameterError):
            ReeConfig(boundary="wrap")
        with pytest.raises(ParameterError):
            ReeConfig(psf=np.ones((3, 3)))


class TestRee:
    def test_constant_frame_unchanged_bitwise(self):
        frame = np.full((16, 16, 3), 0.25)
        assert np.array_equal(ree(frame), frame)

    def test_sharp_frame_stays_close(self):
        rng = np.random.default_rng(86)
        frame = gray_to_frame(smooth_texture(rng, shape=(48, 48), sigma=1.5))
        restored = ree(frame)
        mean_abs_diff = float(np.abs(restored - frame).mean())
        assert mean_abs_diff <= 0.05

    def test_edge_energy_increases_on_blurred_checkerboard(self):
        checker = (np.indices((48, 48)).sum(axis=0) // 4 % 2).astype(float)
        blurred = convolve2d(checker, box_kernel(5), padding="reflect")
        frame = gray_to_frame(np.clip(blurred, 0.0, 1.0))
        restored = ree(frame)
        assert lap1(to_grayscale(restored), 11) > lap1(to_grayscale(frame), 11)

    def test_output_clamped_to_unit_range(self):
        rng = np.random.default_rng(87)
        frame = rng.random((24, 24, 3))
        restored = ree(frame)
        assert restored.min() >= 0.0
        assert restored.max() <= 1.0


class TestRestorerSpec:
    def test_backend_validation(self):
        with pytest.raises(ParameterError):
            RestorerSpec(backend="neural")
        with pytest.raises(ParameterError):
            RestorerSpec(backend="external")  # needs a command
        spec = RestorerSpec(backend="external", command=["echo"])
        assert spec.command == ("echo",)

    def test_timeout_validation(self):
        with pytest.raises(ParameterError):
            RestorerSpec(timeout=0.0)


def triplet_of(frame):
    return Triplet(previous=frame, current=frame, next=frame)


class TestRestoreFrame:
    def test_passthrough_identity(self):
        rng = np.random.default_rng(88)
        frame = rng.random((10, 10, 3))
        out = restore_frame(triplet_of(frame), None, None, RestorerSpec())
        assert out is frame

    def test_rl_deconv_uses_precomputed_triplet(self):
        rng = np.random.default_rng(89)
        raw = triplet_of(rng.random((10, 10, 3)))
        restored = triplet_of(rng.random((10, 10, 3)))
        spec = RestorerSpec(backend="rl_deconv")
        out = restore_frame(raw, restored, None, spec)
        assert out is restored.current

    def test_rl_deconv_with_own_config_recomputes(self):
        rng = np.random.default_rng(90)
        frame = rng.random((16, 16, 3))
        cfg = ReeConfig(iterations=2)
        spec = RestorerSpec(backend="rl_deconv", ree_config=cfg)
        out = restore_frame(triplet_of(frame), None, None, spec)
        assert np.array_equal(out, ree(frame, cfg))

    def test_rl_deconv_improves_window9_synthesized_blur(self):
        rng = np.random.default_rng(80)
        base = smooth_texture(rng, shape=(64, 64), sigma=2.0)
        source = RolledTextureSource(base, 36)
        video = synthesize(
            source, SynthConfig(sharp_ratio=0.0, seed=0), windows=[9, 9, 9, 9]
        )
        for j in range(len(video)):
            x = video.frames[j]
            truth = video.ground_truths[j]
            y = restore_frame(
                triplet_of(x), None, None,
                RestorerSpec(backend="rl_deconv", ree_config=ReeConfig()),
            )
            assert psnr(y, truth) >= psnr(x, truth)


def write_script(tmp_path, body, name="backend.py"):
    path = tmp_path / name
    path.write_text("import argparse, shutil, sys, time\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return [sys.executable, str(path)]


ARGPARSE_PREAMBLE = """
    parser = argparse.ArgumentParser()
    for flag in ("--current", "--prev", "--next", "--sharp", "--out"):
        parser.add_argument(flag)
    args = parser.parse_args()
"""


class TestExternalBackend:
    def test_echo_roundtrip_is_exact(self, tmp_path):
        command = write_script(
            tmp_path,
            ARGPARSE_PREAMBLE + "    shutil.copyfile(args.current, args.out)\n",
        )
        rng = np.random.default_rng(91)
        frame = quantize16(rng.random((12, 12, 3)))
        spec = RestorerSpec(backend="external", command=command)
        out = restore_frame(triplet_of(frame), triplet_of(frame), None, spec)
        assert np.array_equal(out, frame)

    def test_sharp_flag_passed_through_when_present(self, tmp_path):
        command = write_script(
            tmp_path,
            ARGPARSE_PREAMBLE
            + """
    source = args.sharp if args.sharp else args.current
    shutil.copyfile(source, args.out)
""",
        )
        rng = np.random.default_rng(92)
        frame = quantize16(rng.random((8, 8, 3)))
        sharp = quantize16(rng.random((8, 8, 3)))
        spec = RestorerSpec(backend="external", command=command)
        out = restore_frame(triplet_of(frame), triplet_of(frame), sharp, spec)
        assert np.array_equal(out, sharp)
        out = restore_frame(triplet_of(frame), triplet_of(frame), None, spec)
        assert np.array_equal(out, frame)

    def test_nonzero_exit_raises_with_stderr(self, tmp_path):
        command = write_script(
            tmp_path,
            ARGPARSE_PREAMBLE + "    sys.stderr.write('boom'); sys.exit(3)\n",
        )
        spec = RestorerSpec(backend="external", command=command)
        frame = np.zeros((6, 6, 3))
        with pytest.raises(BackendError, match="status 3") as info:
            restore_frame(triplet_of(frame), triplet_of(frame), None, spec)
        assert info.value.returncode == 3
        assert "boom" in info.value.stderr

    def test_missing_output_raises(self, tmp_path):
        command = write_script(tmp_path, ARGPARSE_PREAMBLE + "    pass\n")
        spec = RestorerSpec(backend="external", command=command)
        frame = np.zeros((6, 6, 3))
        with pytest.raises(BackendError, match="did not write"):
            restore_frame(triplet_of(frame), triplet_of(frame), None, spec)

    def test_resized_output_raises(self, tmp_path):
        command = write_script(
            tmp_path,
            ARGPARSE_PREAMBLE
            + """
    import numpy as np, cv2
    cv2.imwrite(args.out, np.zeros((3, 3, 3), dtype="uint8"))
""",
        )
        spec = RestorerSpec(backend="external", command=command)
        frame = np.zeros((6, 6, 3))
        with pytest.raises(BackendError, match="size"):
            restore_frame(triplet_of(frame), triplet_of(frame), None, spec)

    def test_timeout_raises(self, tmp_path):
        command = write_script(
            tmp_path, ARGPARSE_PREAMBLE + "    time.sleep(30)\n"
        )
        spec = RestorerSpec(backend="external", command=command, timeout=0.5)
        frame = np.zeros((4, 4, 3))
        with pytest.raises(BackendError, match="timed out"):
            restore_frame(triplet_of(frame), triplet_of(frame), None, spec)

    def test_command_not_found_raises(self):
        spec = RestorerSpec(
            backend="external", command=["/nonexistent/restorer-binary"]
        )
        frame = np.zeros((4, 4, 3))
        with pytest.raises(BackendError, match="not found"):
            restore_frame(triplet_of(frame), triplet_of(frame), None, spec)

    def test_external_requires_restored_triplet(self):
        spec = RestorerSpec(backend="external", command=["true"])
        frame = np.zeros((4, 4, 3))
        with pytest.raises(InputError):
            restore_frame(triplet_of(frame), None, None, spec)


class TestRunPipeline:
    def test_single_frame_video(self):
        rng = np.random.default_rng(93)
        frame = rng.random((16, 16, 3))
        outputs, records = run_pipeline([frame], None, oracle_labels=[True])
        assert len(outputs) == 1
        assert records[0].branch == "self"
        assert records[0].closest_sharp is None
        assert np.array_equal(outputs[0], frame)

    def test_all_sharp_passthrough_is_bit_identical(self):
        rng = np.random.default_rng(94)
        frames = [rng.random((12, 12, 3)) for _ in range(6)]
        outputs, records = run_pipeline(
            frames, None, oracle_labels=[True] * 6
        )
        for got, want in zip(outputs, frames):
            assert np.array_equal(got, want)
        assert [r.branch for r in records] == ["self"] + ["sharp"] * 5

    def test_twenty_frame_branch_accounting(self):
        rng = np.random.default_rng(95)
        base = smooth_texture(rng, shape=(24, 24), sigma=1.5)
        source = RolledTextureSource(base, 200)
        video = synthesize(source, SynthConfig(sharp_ratio=0.3, seed=1234))
        frames = list(video.frames[:20])
        labels = [bool(v) for v in video.labels[:20]]
        config = PipelineConfig(
            restorer=RestorerSpec(backend="rl_deconv"),
            ree=ReeConfig(iterations=1),
        )
        outputs, records = run_pipeline(
            frames, None, config, oracle_labels=labels
        )
        assert len(outputs) == 20
        from deblurkit.detector import find_closest_sharp

        for i, record in enumerate(records):
            expected = find_closest_sharp(labels, i, lookback=config.lookback)
            assert record.closest_sharp == expected
            assert record.branch == ("sharp" if expected is not None else "self")
            assert record.label == labels[i]
        sharp_branches = sum(r.branch == "sharp" for r in records)
        expected_sharp = sum(
            find_closest_sharp(labels, i, lookback=7) is not None
            for i in range(20)
        )
        assert sharp_branches == expected_sharp

    def test_detector_path_matches_manual_prediction(self):
        from deblurkit.detector import DetectorModel
        from deblurkit.focusmetrics import feature_vector

        rng = np.random.default_rng(96)
        frames = [rng.random((16, 16, 3)) for _ in range(4)]
        model = DetectorModel(
            weights=np.array([1.0, 0, 0, 0, 0, 0]),
            bias=0.0,
            feature_means=np.zeros(6),
            feature_stds=np.ones(6),
        )
        outputs, records = run_pipeline(frames, model)
        features = np.stack(
            [feature_vector(f, 11).as_array() for f in frames]
        )
        probabilities = model.predict_proba(features)
        for record, probability in zip(records, probabilities):
            assert record.probability == pytest.approx(float(probability), abs=0)
            assert record.label == (probability >= 0.5)

    def test_jobs_do_not_change_results(self):
        rng = np.random.default_rng(97)
        frames = [rng.random((16, 16, 3)) for _ in range(5)]
        labels = [True, False, False, True, False]
        config_serial = PipelineConfig(
            restorer=RestorerSpec(backend="rl_deconv"), ree=ReeConfig(iterations=1)
        )
        config_parallel = PipelineConfig(
            restorer=RestorerSpec(backend="rl_deconv"),
            ree=ReeConfig(iterations=1),
            jobs=3,
        )
        out_a, rec_a = run_pipeline(frames, None, config_serial, oracle_labels=labels)
        out_b, rec_b = run_pipeline(frames, None, config_parallel, oracle_labels=labels)
        assert rec_a == rec_b
        for a, b in zip(out_a, out_b):
            assert np.array_equal(a, b)

    def test_parallel_map_preserves_order(self):
        items = [np.full((2, 2), i, dtype=float) for i in range(7)]
        doubled = parallel_map(lambda a: a * 2, items, jobs=4)
        for i, out in enumerate(doubled):
            assert np.array_equal(out, items[i] * 2)

    def test_empty_video_rejected(self):
        with pytest.raises(InputError):
            run_pipeline([], None, oracle_labels=[])

    def test_mismatched_shapes_rejected(self):
        frames = [np.zeros((8, 8, 3)), np.zeros((8, 9, 3))]
        with pytest.raises(InputError, match="share one size"):
            run_pipeline(frames, None, oracle_labels=[True, True])

    def test_model_required_without_oracle(self):
        with pytest.raises(InputError, match="model"):
            run_pipeline([np.zeros((8, 8, 3))], None)

    def test_oracle_labels_length_checked(self):
        with pytest.raises(InputError):
            run_pipeline([np.zeros((8, 8, 3))], None, oracle_labels=[True, False])


class TestPipelineCsv:
    def test_roundtrip(self, tmp_path):
        from deblurkit.restore import FrameRecord

        records = [
            FrameRecord(0, 0.9, True, None, "self"),
            FrameRecord(1, 1.0 / 3.0, False, 0, "sharp"),
        ]
        path = tmp_path / "records.csv"
        write_pipeline_csv(path, records)
        lines = path.read_text().splitlines()
        assert lines[0] == "frame_index,probability,label,t_i,branch"
        assert lines[1].split(",")[3] == "-1"
        assert read_pipeline_csv(path) == records

    def test_foreign_header_rejected(self, tmp_path):
        path = tmp_path / "records.csv"
        path.write_text("nope\n")
        with pytest.raises(InputError):
            read_pipeline_csv(path)
