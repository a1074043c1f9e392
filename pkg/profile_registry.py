"""
Named encoder profiles.

Profiles are YAML documents (see parse_profile_yaml) kept in the bundled
profiles/ directory; `encode --profile` accepts either a profile name from
there or a path to a profile file.
"""

import logging
import os
from typing import Any, Dict, Optional

from errors import ParameterError
from layer_codecs import LayerCodec
from parse_profile_yaml import parse_profile_directory, parse_profile_file
from scale_space import SpreadSpec, build_schedule, preset_schedule, schedule_from
from stack_codec import ChannelMode, EncoderConfig, ResidualMode

logger = logging.getLogger(__name__)

_CHANNEL_MODES = {"joint": ChannelMode.JOINT, "per-channel": ChannelMode.PER_CHANNEL}
_RESIDUALS = {"wide16": ResidualMode.WIDE16, "clamp8": ResidualMode.CLAMP8}


class ProfileRegistry:
    """Registry of validated encoder profiles."""

    def __init__(self, profile_directory: str = None):
        if profile_directory is None:
            current_dir = os.path.dirname(os.path.abspath(__file__))
            profile_directory = os.path.join(current_dir, "profiles")

        self.profile_directory = profile_directory
        self.profiles: Dict[str, Dict[str, Any]] = {}
        self._load_profiles()

    def _load_profiles(self):
        try:
            for profile in parse_profile_directory(self.profile_directory):
                self.profiles[profile["name"]] = profile
        except ValueError as e:
            logger.warning(f"Could not load encoder profiles: {e}")
            self.profiles = {}

    def list_profiles(self) -> Dict[str, str]:
        """Profile names mapped to their descriptions."""
        return {name: p["description"] for name, p in sorted(self.profiles.items())}

    def get(self, name_or_path: str) -> Dict[str, Any]:
        """A bundled profile by name, or any profile file by path."""
        if name_or_path in self.profiles:
            return self.profiles[name_or_path]
        if os.path.isfile(name_or_path):
            return parse_profile_file(name_or_path)
        raise ParameterError(
            f"Profile '{name_or_path}' not found; available: {', '.join(self.profiles) or 'none'}")


def resolve_schedule(schedule: Dict[str, Any], width: int, height: int):
    if "preset" in schedule:
        return preset_schedule(schedule["preset"], width, height)
    if schedule["sigma0"] == "auto":
        return build_schedule(width, height, schedule["factor"], schedule["sigma_min"])
    return schedule_from(schedule["sigma0"], schedule["factor"], schedule["sigma_min"])


def resolve_spread(spread: Optional[Dict[str, Any]], layer_count: int) -> Optional[SpreadSpec]:
    if spread is None:
        return None
    if spread.get("preset") == "paper-spread":
        return SpreadSpec.paper(layer_count, spread["seed"])
    return SpreadSpec.uniform(spread["radius"], layer_count, spread["seed"])


def to_encoder_config(profile: Dict[str, Any], width: int, height: int, num_workers: int = 1) -> EncoderConfig:
    """Turn a parsed profile into an EncoderConfig for an image of the given size."""
    schedule = resolve_schedule(profile["schedule"], width, height)
    layer = profile["layer_codec"]
    base = profile["base_codec"]
    return EncoderConfig(
        schedule=schedule,
        spread=resolve_spread(profile["spread"], len(schedule)),
        layer_codec=LayerCodec.parse(layer["codec"]),
        quant_bits=layer["quant_bits"],
        downsample=layer["downsample"],
        base_codec=LayerCodec.parse(base["codec"]),
        base_quant_bits=base["quant_bits"],
        residual_mode=_RESIDUALS[profile["residual"]],
        channel_mode=_CHANNEL_MODES[profile["channel_mode"]],
        loss_tolerance=profile["loss_tolerance"],
        num_workers=num_workers,
    )


def default_profile() -> Dict[str, Any]:
    """Settings used when neither a profile nor flags say otherwise."""
    return {
        "name": "default",
        "description": "auto schedule, no spread, lossless deflate layers and base",
        "schedule": {"preset": "auto"},
        "spread": None,
        "layer_codec": {"codec": "deflate", "quant_bits": None, "downsample": None},
        "base_codec": {"codec": "deflate", "quant_bits": None},
        "residual": "wide16",
        "channel_mode": "joint",
        "loss_tolerance": None,
    }


# Global registry instance
_registry = None


def get_registry() -> ProfileRegistry:
    """Get the global registry instance."""
    global _registry
    if _registry is None:
        _registry = ProfileRegistry()
    return _registry
