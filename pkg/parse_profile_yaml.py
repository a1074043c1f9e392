"""
   Reads encoder profiles from YAML files. A profile must be in the format:

   name: <profile_name>
   description: <description>
   schedule:                     <- either {preset: paper|auto}
     sigma0: <number|auto>          or {sigma0, factor, sigma_min}
     factor: <number>
     sigma_min: <number>
   spread:                       <- null disables spreading
     preset: paper-spread           (or radius: <int>)
     seed: <int>
   layer_codec:
     codec: raw|deflate|downq
     quant_bits: <1..8|null>
     downsample: <1..32|null>
   base_codec:
     codec: raw|deflate|downq
     quant_bits: <1..8|null>
   residual: wide16|clamp8
   channel_mode: joint|per-channel
   loss_tolerance: <number|null>
"""

import logging
import os

import yaml

from scale_space import SCHEDULE_PRESETS, SPREAD_PRESETS

logger = logging.getLogger(__name__)

ALLOWED_CODECS = ["raw", "deflate", "downq"]
ALLOWED_RESIDUALS = ["wide16", "clamp8"]
ALLOWED_CHANNEL_MODES = ["joint", "per-channel"]
ALLOWED_SCHEDULE_PRESETS = list(SCHEDULE_PRESETS)
ALLOWED_SPREAD_PRESETS = list(SPREAD_PRESETS)

TOP_LEVEL_FIELDS = ["name", "description", "schedule", "spread", "layer_codec", "base_codec",
                    "residual", "channel_mode", "loss_tolerance"]


def check_exact_fields(obj, allowed_keys, context="root"):
    # helper that ensures that exactly these fields are present
    extra_keys = set(obj.keys()) - set(allowed_keys)
    if extra_keys:
        raise ValueError(f"{context}: unexpected field(s): {', '.join(sorted(extra_keys))}")

    missing_keys = set(allowed_keys) - set(obj.keys())
    if missing_keys:
        raise ValueError(f"{context}: missing required field(s): {', '.join(sorted(missing_keys))}")


def _number(value, context, minimum=None, exclusive=False, integer=False):
    kinds = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ValueError(f"{context}: expected {'an integer' if integer else 'a number'}, got {value!r}")
    if minimum is not None and (value <= minimum if exclusive else value < minimum):
        raise ValueError(f"{context}: must be {'>' if exclusive else '>='} {minimum}, got {value}")
    return value


def _optional_bits(value, context, upper):
    if value is None:
        return None
    value = _number(value, context, 1, integer=True)
    if value > upper:
        raise ValueError(f"{context}: must be <= {upper}, got {value}")
    return value


def _choice(value, allowed, context):
    if value not in allowed:
        raise ValueError(f"{context}: invalid value '{value}', expected one of {', '.join(allowed)}")
    return value


def _parse_schedule(raw):
    if not isinstance(raw, dict):
        raise ValueError("schedule: must be a dictionary.")
    if "preset" in raw:
        check_exact_fields(raw, ["preset"], "schedule")
        return {"preset": _choice(raw["preset"], ALLOWED_SCHEDULE_PRESETS, "schedule -> preset")}
    check_exact_fields(raw, ["sigma0", "factor", "sigma_min"], "schedule")
    sigma0 = raw["sigma0"]
    if sigma0 != "auto":
        sigma0 = _number(sigma0, "schedule -> sigma0", 0, exclusive=True)
    return {
        "sigma0": sigma0,
        "factor": _number(raw["factor"], "schedule -> factor", 1, exclusive=True),
        "sigma_min": _number(raw["sigma_min"], "schedule -> sigma_min", 0, exclusive=True),
    }


def _parse_spread(raw):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ValueError("spread: must be a dictionary or null.")
    if "preset" in raw:
        check_exact_fields(raw, ["preset", "seed"], "spread")
        spread = {"preset": _choice(raw["preset"], ALLOWED_SPREAD_PRESETS, "spread -> preset")}
    else:
        check_exact_fields(raw, ["radius", "seed"], "spread")
        spread = {"radius": _number(raw["radius"], "spread -> radius", 0, integer=True)}
    spread["seed"] = _number(raw["seed"], "spread -> seed", 0, integer=True)
    if spread["seed"] >= 1 << 64:
        raise ValueError(f"spread -> seed: must fit in 64 bits, got {spread['seed']}")
    return spread


def _parse_codec(raw, context, fields):
    if not isinstance(raw, dict):
        raise ValueError(f"{context}: must be a dictionary.")
    check_exact_fields(raw, fields, context)
    parsed = {"codec": _choice(raw["codec"], ALLOWED_CODECS, f"{context} -> codec")}
    parsed["quant_bits"] = _optional_bits(raw["quant_bits"], f"{context} -> quant_bits", 8)
    if "downsample" in fields:
        parsed["downsample"] = _optional_bits(raw["downsample"], f"{context} -> downsample", 32)
    return parsed


def parse_profile_data(data, source="<profile>"):
    """
    Validates an already loaded profile document.

    Every section is checked for exactly its documented fields so that a
    typo in a key is an error rather than a silently ignored setting.
    """
    if not isinstance(data, dict):
        raise ValueError(f"{source}: YAML root must be a dictionary.")

    check_exact_fields(data, TOP_LEVEL_FIELDS, context="Top-level")

    name = data["name"]
    if not isinstance(name, str) or not name:
        raise ValueError("Top-level: 'name' must be a non-empty string")
    if not isinstance(data["description"], str):
        raise ValueError(f"Top-level: 'description' for profile '{name}' must be a string")

    loss_tolerance = data["loss_tolerance"]
    if loss_tolerance is not None:
        loss_tolerance = _number(loss_tolerance, "loss_tolerance", 0)

    return {
        "name": name,
        "description": data["description"],
        "schedule": _parse_schedule(data["schedule"]),
        "spread": _parse_spread(data["spread"]),
        "layer_codec": _parse_codec(data["layer_codec"], "layer_codec", ["codec", "quant_bits", "downsample"]),
        "base_codec": _parse_codec(data["base_codec"], "base_codec", ["codec", "quant_bits"]),
        "residual": _choice(data["residual"], ALLOWED_RESIDUALS, "residual"),
        "channel_mode": _choice(data["channel_mode"], ALLOWED_CHANNEL_MODES, "channel_mode"),
        "loss_tolerance": loss_tolerance,
    }


def parse_profile_file(filename):
    with open(filename, 'r') as file:
        try:
            data = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ValueError(f"Error parsing YAML file '{filename}': {e}")
    return parse_profile_data(data, filename)


def parse_profile_directory(directory):
    """
    Parses every YAML profile in the directory; files that fail validation
    are logged and skipped, duplicate profile names are an error.
    """
    if not os.path.isdir(directory):
        raise ValueError(f"Directory '{directory}' does not exist or is not a directory.")

    profiles = []
    for filename in sorted(os.listdir(directory)):
        if filename.endswith('.yaml') or filename.endswith('.yml'):
            full_path = os.path.join(directory, filename)
            try:
                profiles.append(parse_profile_file(full_path))
            except ValueError as e:
                logger.warning(f"Error parsing file '{filename}': {e}")

    names = set()
    for profile in profiles:
        if profile["name"] in names:
            raise ValueError(f"Duplicate profile name found: '{profile['name']}'")
        names.add(profile["name"])

    return profiles
