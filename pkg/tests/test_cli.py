"""
Tests for the gbs command-line interface.
"""

import json
import logging
import os

import jsonschema
import numpy as np
import pytest

from analysis import LAYER_REPORT_SCHEMA
from cli import EXIT_FORMAT, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, build_parser, merge_settings, run
from container import read_container
from pnm_io import read_pnm_file, write_pnm_file
from raster import RasterImage
from tests.synthetic import blob_image


@pytest.fixture
def image_file(tmp_path, small_rgb):
    path = str(tmp_path / "input.ppm")
    write_pnm_file(path, small_rgb)
    return path


@pytest.fixture
def stack_file(tmp_path, image_file):
    path = str(tmp_path / "input.gbs")
    assert run(["encode", "--input", image_file, "--output", path]) == EXIT_OK
    return path


class TestEncodeDecode:
    """Test encode, decode and diff from the command line."""

    def test_round_trip_is_byte_identical(self, tmp_path, image_file, stack_file):
        out = str(tmp_path / "decoded.ppm")
        assert run(["decode", "--input", stack_file, "--output", out]) == EXIT_OK
        with open(image_file, 'rb') as a, open(out, 'rb') as b:
            assert a.read() == b.read()

    def test_diff_of_round_trip_is_black(self, tmp_path, image_file, stack_file):
        decoded = str(tmp_path / "decoded.ppm")
        diff = str(tmp_path / "diff.ppm")
        run(["decode", "--input", stack_file, "--output", decoded])
        assert run(["diff", image_file, decoded, "--output", diff]) == EXIT_OK
        assert np.all(read_pnm_file(diff).to_array() == 0)

    def test_verify_lossless(self, tmp_path, image_file):
        out = str(tmp_path / "v.gbs")
        assert run(["encode", "--input", image_file, "--output", out, "--verify"]) == EXIT_OK
        assert os.path.exists(out)

    def test_output_is_deterministic(self, tmp_path, image_file):
        outputs = []
        for workers in ("1", "3"):
            out = str(tmp_path / f"w{workers}.gbs")
            assert run(["encode", "--input", image_file, "--output", out, "--per-channel",
                        "--spread", "2", "--seed", "9", "--workers", workers]) == EXIT_OK
            with open(out, 'rb') as f:
                outputs.append(f.read())
        assert outputs[0] == outputs[1]

    def test_paper_profile(self, tmp_path, image_file):
        out = str(tmp_path / "p.gbs")
        assert run(["encode", "--input", image_file, "--output", out, "--profile", "paper"]) == EXIT_OK
        stack = read_container(out)
        assert stack.layer_count == 11
        assert stack.layers[-1].spread_radius == 2

    def test_decode_with_workers(self, tmp_path, image_file, stack_file):
        out = str(tmp_path / "d.ppm")
        assert run(["decode", "--input", stack_file, "--output", out, "--workers", "2"]) == EXIT_OK
        assert read_pnm_file(out) == read_pnm_file(image_file)


class TestOtherCommands:
    """Test preview, inspect, denoise, enlarge and the signal commands."""

    def test_preview_top_down_zero_is_grey(self, tmp_path, stack_file):
        out = str(tmp_path / "frame.ppm")
        assert run(["preview", "--input", stack_file, "--output", out, "--layers", "0",
                    "--order", "topdown"]) == EXIT_OK
        assert np.all(read_pnm_file(out).to_array() == 128)

    def test_inspect_json(self, stack_file, capsys):
        assert run(["inspect", "--input", stack_file, "--json", "--corruption"]) == EXIT_OK
        document = json.loads(capsys.readouterr().out)
        jsonschema.validate(document, LAYER_REPORT_SCHEMA)
        assert document["layers"][-1]["role"] == "base"
        assert len(document["base_stats"]) == 3
        assert len(document["corruption"]) == len(document["layers"]) - 1

    def test_inspect_table(self, stack_file, capsys):
        assert run(["inspect", "--input", stack_file]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("40x32x3 joint wide16 seed=0 layers=5")
        assert "base" in out

    def test_denoise_recipe(self, tmp_path, capsys):
        image = str(tmp_path / "small.ppm")
        write_pnm_file(image, blob_image(32, [120, 100, 90], 3))
        stack = str(tmp_path / "small.gbs")
        cleaned = str(tmp_path / "clean.gbs")
        assert run(["encode", "--input", image, "--output", stack,
                    "--sigma0", "4096", "--factor", "2", "--sigma-min", "1"]) == EXIT_OK
        assert read_container(stack).layer_count == 13
        assert run(["denoise", "--input", stack, "--output", cleaned, "--blur-layers", "9,11,12",
                    "--layer-sigma", "10", "--base-grey", "--base-sigma", "3"]) == EXIT_OK
        original, result = read_container(stack), read_container(cleaned)
        assert result.layer_count == 13
        for i in (1, 2, 3, 4, 5, 6, 7, 8, 10, 13):
            assert result.layers[i - 1] == original.layers[i - 1]
        assert result.base.greyscale
        assert len(result.base.payloads) == 1
        assert result.base.payloads != original.base.payloads

    def test_enlarge(self, tmp_path, stack_file):
        out = str(tmp_path / "big.ppm")
        assert run(["enlarge", "--input", stack_file, "--output", out, "--scale", "2"]) == EXIT_OK
        big = read_pnm_file(out)
        assert (big.width, big.height) == (80, 64)

    def test_signal_round_trip(self, tmp_path):
        raw = tmp_path / "tone.raw"
        samples = (128 + 50 * np.sin(np.arange(500) / 11.0)).astype(np.uint8)
        raw.write_bytes(samples.tobytes())
        stack = str(tmp_path / "tone.gbs")
        out = str(tmp_path / "out.raw")
        assert run(["signal-encode", "--input", str(raw), "--output", stack, "--sample-rate", "8000"]) == EXIT_OK
        assert read_container(stack).signal_meta.sample_rate == 8000
        assert run(["signal-decode", "--input", stack, "--output", out]) == EXIT_OK
        with open(out, 'rb') as f:
            assert f.read() == samples.tobytes()
        with open(out + ".meta") as f:
            assert f.read().startswith("length=500 sample_rate=8000")

    def test_pcm16_round_trip(self, tmp_path):
        pcm = np.rint(12000 * np.sin(np.arange(800) / 9.0)).astype('<i2')
        source = tmp_path / "tone.pcm"
        source.write_bytes(pcm.tobytes())
        stack = str(tmp_path / "tone.gbs")
        out = tmp_path / "out.pcm"
        assert run(["signal-encode", "--input", str(source), "--output", stack, "--pcm16le"]) == EXIT_OK
        assert run(["signal-decode", "--input", stack, "--output", str(out), "--pcm16le"]) == EXIT_OK
        decoded = np.frombuffer(out.read_bytes(), dtype='<i2').astype(int)
        step = (int(pcm.max()) - int(pcm.min())) / 255.0
        assert np.abs(decoded - pcm).max() <= step / 2 + 1


class TestIndexCommands:
    """Test index add and index search."""

    def test_add_and_search(self, tmp_path, capsys):
        index = str(tmp_path / "index")
        for i, colour in enumerate([[60, 60, 60], [200, 80, 40], [90, 180, 120]]):
            image = str(tmp_path / f"img{i}.ppm")
            stack = str(tmp_path / f"img{i}.gbs")
            write_pnm_file(image, blob_image(48, colour, 3, seed=i))
            assert run(["encode", "--input", image, "--output", stack, "--preset", "paper"]) == EXIT_OK
            assert run(["index", "add", "--index", index, "--id", f"img{i}", "--input", stack,
                        "--preset", "paper"]) == EXIT_OK
        capsys.readouterr()
        assert run(["index", "search", "--index", index, "--input", str(tmp_path / "img1.gbs"),
                    "--thresholds", "0.05,0.05,0.05", "--json"]) == EXIT_OK
        results = json.loads(capsys.readouterr().out)
        assert results[0]["id"] == "img1"
        assert results[0]["per_level_scores"][0] == 0.0

    def test_duplicate_id(self, tmp_path, stack_file):
        index = str(tmp_path / "index")
        assert run(["index", "add", "--index", index, "--id", "a", "--input", stack_file]) == EXIT_OK
        assert run(["index", "add", "--index", index, "--id", "a", "--input", stack_file]) == EXIT_FORMAT

    def test_search_without_index(self, tmp_path, stack_file):
        assert run(["index", "search", "--index", str(tmp_path / "none"), "--input", stack_file,
                    "--thresholds", "0.1"]) == EXIT_IO


class TestExitCodes:
    """Test exit codes and that failed commands write nothing."""

    def test_unknown_flag(self, tmp_path, image_file):
        assert run(["encode", "--input", image_file, "--output", str(tmp_path / "o"), "--bogus"]) == EXIT_USAGE

    def test_missing_subcommand(self):
        assert run([]) == EXIT_USAGE

    def test_missing_input(self, tmp_path):
        out = tmp_path / "o.gbs"
        assert run(["encode", "--input", str(tmp_path / "absent.ppm"), "--output", str(out)]) == EXIT_IO
        assert not out.exists()

    def test_corrupt_container(self, tmp_path, stack_file):
        data = bytearray(open(stack_file, 'rb').read())
        data[60] ^= 0xFF
        broken = tmp_path / "broken.gbs"
        broken.write_bytes(bytes(data))
        out = tmp_path / "o.ppm"
        assert run(["decode", "--input", str(broken), "--output", str(out)]) == EXIT_FORMAT
        assert not out.exists()

    def test_bad_pnm(self, tmp_path):
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        assert run(["encode", "--input", str(bad), "--output", str(tmp_path / "o")]) == EXIT_FORMAT

    def test_invalid_parameter(self, tmp_path, stack_file):
        out = tmp_path / "frame.ppm"
        assert run(["preview", "--input", stack_file, "--output", str(out), "--layers", "99"]) == EXIT_USAGE
        assert not out.exists()

    def test_unknown_profile(self, tmp_path, image_file):
        assert run(["encode", "--input", image_file, "--output", str(tmp_path / "o"),
                    "--profile", "no-such-profile"]) == EXIT_USAGE

    def test_verification_failure_writes_nothing(self, tmp_path):
        image = str(tmp_path / "grey.pgm")
        rng = np.random.default_rng(0)
        write_pnm_file(image, RasterImage.from_array(rng.integers(0, 256, size=(24, 24))))
        out = tmp_path / "lossy.gbs"
        code = run(["encode", "--input", image, "--output", str(out), "--base-codec", "downq",
                    "--base-quant-bits", "2", "--loss-tolerance", "0", "--verify"])
        assert code == EXIT_VERIFY
        assert not out.exists()


class TestMergeSettings:
    """Test that explicit flags override profile values."""

    def parse(self, *argv):
        return build_parser().parse_args(["encode", "--input", "i", "--output", "o", *argv])

    def test_defaults(self):
        settings = merge_settings(self.parse())
        assert settings["schedule"] == {"preset": "auto"}
        assert settings["spread"] is None

    def test_flags_override_profile(self):
        settings = merge_settings(self.parse("--profile", "compact", "--quant-bits", "3", "--residual", "clamp8"))
        assert settings["layer_codec"]["codec"] == "downq"
        assert settings["layer_codec"]["quant_bits"] == 3
        assert settings["residual"] == "clamp8"

    def test_seed_applies_to_profile_spread(self):
        settings = merge_settings(self.parse("--profile", "paper", "--seed", "77"))
        assert settings["spread"] == {"preset": "paper-spread", "seed": 77}

    def test_profile_is_not_mutated(self):
        merge_settings(self.parse("--profile", "paper", "--seed", "5"))
        assert merge_settings(self.parse("--profile", "paper"))["spread"]["seed"] == 0

    def test_sigma0_keeps_other_schedule_fields(self):
        settings = merge_settings(self.parse("--profile", "lossless", "--sigma0", "50"))
        assert settings["schedule"] == {"sigma0": 50.0, "factor": 2, "sigma_min": 1}

    def test_spread_zero_disables(self):
        assert merge_settings(self.parse("--profile", "paper", "--spread", "0"))["spread"] is None

    def test_preset_warns_about_ignored_schedule_flags(self, caplog):
        with caplog.at_level(logging.WARNING, logger="cli"):
            settings = merge_settings(self.parse("--preset", "paper", "--factor", "3"))
        assert settings["schedule"] == {"preset": "paper"}
        assert "--factor and --sigma-min have no effect with --preset paper" in caplog.text

    def test_preset_alone_is_quiet(self, caplog):
        with caplog.at_level(logging.WARNING, logger="cli"):
            merge_settings(self.parse("--preset", "paper"))
        assert "no effect" not in caplog.text
