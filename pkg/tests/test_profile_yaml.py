"""
Tests for encoder profile parsing and the profile registry.
"""

import os

import pytest

from errors import ParameterError
from layer_codecs import LayerCodec
from parse_profile_yaml import parse_profile_data, parse_profile_directory, parse_profile_file
from profile_registry import ProfileRegistry, default_profile, get_registry, to_encoder_config
from scale_space import PAPER_SIGMAS
from stack_codec import ChannelMode, ResidualMode
from tests.conftest import PROFILE_FIXTURES


def fixture_path(name):
    return os.path.join(PROFILE_FIXTURES, name)


class TestProfileParsing:
    """Test profile YAML validation."""

    def test_parse_explicit_schedule(self):
        """Test parsing a profile with an explicit schedule and radius spread."""
        profile = parse_profile_file(fixture_path("pass_explicit.yaml"))
        assert profile["name"] == "explicit"
        assert profile["schedule"] == {"sigma0": 64, "factor": 2, "sigma_min": 1}
        assert profile["spread"] == {"radius": 4, "seed": 42}
        assert profile["layer_codec"] == {"codec": "downq", "quant_bits": 6, "downsample": None}
        assert profile["channel_mode"] == "per-channel"
        assert profile["loss_tolerance"] == 2

    def test_parse_preset_schedule(self):
        """Test parsing a profile built on presets."""
        profile = parse_profile_file(fixture_path("pass_preset.yaml"))
        assert profile["schedule"] == {"preset": "paper"}
        assert profile["spread"] == {"preset": "paper-spread", "seed": 7}
        assert profile["base_codec"] == {"codec": "downq", "quant_bits": 5}
        assert profile["residual"] == "clamp8"
        assert profile["loss_tolerance"] is None

    @pytest.mark.parametrize("filename,message", [
        ("fail_extra_fields.yaml", "unexpected field"),
        ("fail_missing_residual.yaml", "missing required field"),
        ("fail_bad_codec.yaml", "invalid value 'jpeg'"),
        ("fail_factor.yaml", "must be > 1"),
        ("fail_quant_bits.yaml", "must be <= 8"),
        ("fail_schedule_mixed.yaml", "unexpected field"),
        ("fail_negative_tolerance.yaml", "must be >= 0"),
        ("fail_syntax.yaml", "Error parsing YAML file"),
    ])
    def test_invalid_profiles(self, filename, message):
        """Test that every malformed profile raises ValueError with context."""
        with pytest.raises(ValueError, match=message):
            parse_profile_file(fixture_path(filename))

    def test_root_must_be_mapping(self):
        """Test that a list document is rejected."""
        with pytest.raises(ValueError, match="root must be a dictionary"):
            parse_profile_data(["name"])

    def test_boolean_is_not_a_number(self):
        """Test that YAML booleans are not accepted where numbers are expected."""
        data = parse_profile_data(default_profile())
        data["loss_tolerance"] = True
        with pytest.raises(ValueError, match="expected a number"):
            parse_profile_data(data)

    def test_parse_directory_skips_invalid_files(self):
        """Test that a directory parse keeps valid profiles and skips broken ones."""
        profiles = parse_profile_directory(fixture_path("pass_dir"))
        assert sorted(p["name"] for p in profiles) == ["explicit", "preset"]

    def test_parse_directory_duplicate_names(self):
        """Test that duplicate profile names raise ValueError."""
        with pytest.raises(ValueError, match="Duplicate profile name"):
            parse_profile_directory(fixture_path("fail_dir"))

    def test_parse_missing_directory(self, tmp_path):
        """Test that a missing directory raises ValueError."""
        with pytest.raises(ValueError, match="does not exist"):
            parse_profile_directory(str(tmp_path / "nope"))


class TestProfileRegistry:
    """Test profile lookup and conversion to encoder settings."""

    def test_bundled_profiles(self):
        """Test that the bundled profiles load."""
        profiles = get_registry().list_profiles()
        assert {"paper", "lossless", "compact"} <= set(profiles)

    def test_registry_from_directory(self, temp_profile_dir):
        """Test a registry over a directory with one broken file."""
        registry = ProfileRegistry(temp_profile_dir)
        assert list(registry.list_profiles()) == ["explicit"]

    def test_get_by_path(self):
        """Test that a path works where a name is expected."""
        profile = get_registry().get(fixture_path("pass_preset.yaml"))
        assert profile["name"] == "preset"

    def test_get_unknown(self):
        """Test that an unknown profile raises a parameter error."""
        with pytest.raises(ParameterError, match="not found"):
            get_registry().get("no-such-profile")

    def test_paper_profile_to_config(self):
        """Test converting the bundled paper profile."""
        cfg = to_encoder_config(get_registry().get("paper"), 512, 512)
        assert cfg.schedule.sigmas == PAPER_SIGMAS
        assert cfg.spread.radii == (30, 30, 30, 30, 30, 30, 20, 10, 5, 3, 2)
        assert cfg.layer_codec is LayerCodec.DEFLATE
        assert cfg.lossless

    def test_explicit_profile_to_config(self):
        """Test converting an explicit profile."""
        cfg = to_encoder_config(parse_profile_file(fixture_path("pass_explicit.yaml")), 100, 80)
        assert cfg.schedule.sigmas == (64.0, 32.0, 16.0, 8.0, 4.0, 2.0, 1.0)
        assert cfg.spread.radii == (4,) * 7
        assert cfg.spread.seed == 42
        assert cfg.channel_mode is ChannelMode.PER_CHANNEL
        assert cfg.residual_mode is ResidualMode.WIDE16
        assert cfg.loss_tolerance == 2

    def test_auto_sigma0_uses_image_size(self):
        """Test that sigma0 auto is half the larger dimension."""
        cfg = to_encoder_config(get_registry().get("lossless"), 200, 64)
        assert cfg.schedule.sigmas[0] == 100.0
        assert cfg.schedule.sigmas[-1] == 1.0
