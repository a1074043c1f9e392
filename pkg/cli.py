#!/usr/bin/env python3
"""
Command-line interface for the Gaussian blur stack codec.

Exit codes: 0 success, 1 usage, 2 I/O, 3 format or decode error,
4 verification failed. Diagnostics go to stderr; output files are only
written once the whole command has succeeded.
"""

import argparse
import copy
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from analysis import (DiffMode, base_stats, corruption_test, denoise, diff_image, layer_report,
                      layer_report_json, layer_report_table)
from config import config, configure_logging
from container import deserialize, read_container, serialize
from errors import GBSError, ParameterError, VerificationError
from pnm_io import atomic_write, read_pnm_file, save_pnm
from profile_registry import default_profile, get_registry, to_encoder_config
from raster import INF, psnr
from scale_space import SCHEDULE_PRESETS, SPREAD_PRESETS
from search import (MANIFEST_NAME, StackIndex, coarse_to_fine_search, index_add, load_index, save_index,
                    search_sharded)
from signal1d import Signal1D, decode1d, encode1d, format_sidecar, read_signal_file, sidecar_path
from stack_codec import ReconstructionOrder, decode, encode, enlarge, partial_reconstruct, verify

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_VERIFY = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _sigma0(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got '{text}'")


def _add_encoding_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--profile", help="bundled profile name or path to a profile YAML file")
    schedule = parser.add_mutually_exclusive_group()
    schedule.add_argument("--preset", choices=SCHEDULE_PRESETS, help="standard schedule preset")
    schedule.add_argument("--sigma0", type=_sigma0, help="first sigma in pixels, or 'auto' (max dimension / 2)")
    parser.add_argument("--factor", type=float, help="sigma reduction factor between layers")
    parser.add_argument("--sigma-min", type=float, help="smallest sigma of the schedule")
    spread = parser.add_mutually_exclusive_group()
    spread.add_argument("--spread", type=int, metavar="R", help="uniform spread radius (0 disables)")
    spread.add_argument("--spread-preset", choices=SPREAD_PRESETS, help="tabulated spread radii")
    parser.add_argument("--seed", type=int, help="64-bit spread seed (default 0)")
    parser.add_argument("--layer-codec", choices=["raw", "deflate", "downq"])
    parser.add_argument("--quant-bits", type=int, help="downq layer quantizer bits (1..8)")
    parser.add_argument("--downsample", type=int, help="fixed downq layer downsample factor (1..32)")
    parser.add_argument("--per-channel", action="store_true", help="decompose R, G and B independently")
    parser.add_argument("--base-codec", choices=["raw", "deflate", "downq"])
    parser.add_argument("--base-quant-bits", type=int, help="downq base quantizer bits (1..8)")
    parser.add_argument("--residual", choices=["wide16", "clamp8"])
    parser.add_argument("--loss-tolerance", type=float, help="max abs reconstruction error to densify towards")
    parser.add_argument("--workers", type=int, default=config.NUM_WORKERS, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gbs", description="Gaussian blur stack codec")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("encode", help="PNM image to GBS1 container")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_encoding_options(p)
    p.add_argument("--verify", action="store_true", help="decode and compare before writing")

    p = sub.add_parser("decode", help="GBS1 container to PNM image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--workers", type=int, default=config.NUM_WORKERS)

    p = sub.add_parser("preview", help="progressive reconstruction frame")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--layers", type=int, required=True, metavar="K")
    p.add_argument("--order", choices=[o.value for o in ReconstructionOrder], default="bottomup")

    p = sub.add_parser("inspect", help="per-layer statistics")
    p.add_argument("--input", required=True)
    p.add_argument("--json", action="store_true", help="emit one JSON document")
    p.add_argument("--threshold", type=float, help="noise-share threshold for the noisy flag")
    p.add_argument("--corruption", action="store_true", help="add per-layer corruption PSNR")

    p = sub.add_parser("diff", help="difference of two PNM images")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mode", choices=[m.value for m in DiffMode], default="absolute")
    p.add_argument("--output", required=True)

    p = sub.add_parser("denoise", help="re-blur selected layers and the base")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--blur-layers", type=_int_list, default=[], metavar="I,J,...")
    p.add_argument("--layer-sigma", type=float, default=10.0)
    p.add_argument("--base-grey", action="store_true")
    p.add_argument("--base-sigma", type=float)

    p = sub.add_parser("enlarge", help="upscale by merging enlarged layers")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=int, required=True)

    p = sub.add_parser("signal-encode", help="8-bit sample file to GBS1 container")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--pcm16le", action="store_true", help="input is signed 16-bit little-endian PCM")
    p.add_argument("--sample-rate", type=int, help="override the sample rate (Hz)")
    _add_encoding_options(p)

    p = sub.add_parser("signal-decode", help="GBS1 container to 8-bit sample file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--pcm16le", action="store_true", help="write denormalized 16-bit PCM instead")

    p = sub.add_parser("index", help="coarse-to-fine search index")
    index_sub = p.add_subparsers(dest="index_command", parser_class=_Parser)
    index_sub.required = True
    q = index_sub.add_parser("add", help="add a container to an index directory")
    q.add_argument("--index", required=True)
    q.add_argument("--id", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--preset", default="custom", help="preset name recorded when creating the index")
    q = index_sub.add_parser("search", help="rank index entries against a query container")
    q.add_argument("--index", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--thresholds", type=_float_list, required=True, metavar="T1,T2,...")
    q.add_argument("--max-results", type=int, default=10)
    q.add_argument("--shards", type=int, default=1)
    q.add_argument("--workers", type=int, default=config.NUM_WORKERS)
    q.add_argument("--json", action="store_true")
    return parser


def merge_settings(args: argparse.Namespace) -> Dict[str, Any]:
    """The selected profile (or the defaults) with explicit flags applied on top."""
    profile = get_registry().get(args.profile) if args.profile else default_profile()
    settings = copy.deepcopy(profile)

    if args.preset:
        if args.factor is not None or args.sigma_min is not None:
            logger.warning(f"--factor and --sigma-min have no effect with --preset {args.preset}")
        settings["schedule"] = {"preset": args.preset}
    elif args.sigma0 is not None or args.factor is not None or args.sigma_min is not None:
        current = settings["schedule"]
        settings["schedule"] = {
            "sigma0": args.sigma0 if args.sigma0 is not None else current.get("sigma0", "auto"),
            "factor": args.factor if args.factor is not None else current.get("factor", 2.0),
            "sigma_min": args.sigma_min if args.sigma_min is not None else current.get("sigma_min", 1.0),
        }

    seed = args.seed
    current_seed = (settings["spread"] or {}).get("seed", 0)
    if args.spread_preset:
        settings["spread"] = {"preset": args.spread_preset, "seed": current_seed if seed is None else seed}
    elif args.spread is not None:
        settings["spread"] = None if args.spread == 0 else {
            "radius": args.spread, "seed": current_seed if seed is None else seed}
    elif seed is not None:
        if settings["spread"] is None:
            logger.warning("--seed has no effect without --spread or --spread-preset")
        else:
            settings["spread"]["seed"] = seed

    layer = settings["layer_codec"]
    if args.layer_codec:
        layer["codec"] = args.layer_codec
    if args.quant_bits is not None:
        layer["quant_bits"] = args.quant_bits
    if args.downsample is not None:
        layer["downsample"] = args.downsample
    if args.base_codec:
        settings["base_codec"]["codec"] = args.base_codec
    if args.base_quant_bits is not None:
        settings["base_codec"]["quant_bits"] = args.base_quant_bits
    if args.residual:
        settings["residual"] = args.residual
    if args.per_channel:
        settings["channel_mode"] = "per-channel"
    if args.loss_tolerance is not None:
        settings["loss_tolerance"] = args.loss_tolerance
    return settings


def cmd_encode(args) -> int:
    image = read_pnm_file(args.input)
    cfg = to_encoder_config(merge_settings(args), image.width, image.height, args.workers)
    stack = encode(image, cfg)
    data = serialize(stack)
    if args.verify:
        tolerance = 0 if cfg.lossless else cfg.loss_tolerance
        if tolerance is None:
            error = int(np.abs(decode(stack).to_array() - image.to_array()).max())
            logger.info(f"Verification: lossy configuration, max error {error} (no tolerance set)")
        else:
            error = verify(image, deserialize(data), tolerance)
            logger.info(f"Verification passed: max error {error} <= {tolerance}")
    atomic_write(args.output, data)
    raw = image.width * image.height * image.channels
    logger.info(f"Wrote {args.output}: {len(data)} bytes ({len(data) / raw:.1%} of raw samples)")
    return EXIT_OK


def cmd_decode(args) -> int:
    stack = read_container(args.input)
    image = decode(stack, args.workers)
    atomic_write(args.output, save_pnm(image))
    return EXIT_OK


def cmd_preview(args) -> int:
    stack = read_container(args.input)
    frame = partial_reconstruct(stack, args.layers, ReconstructionOrder(args.order))
    atomic_write(args.output, save_pnm(frame))
    return EXIT_OK


def _json_number(value: float):
    return "inf" if value == INF else value


def cmd_inspect(args) -> int:
    stack = read_container(args.input)
    reports = layer_report(stack, args.threshold)
    corruption = [corruption_test(stack, i) for i in range(1, stack.layer_count + 1)] if args.corruption else []
    if args.json:
        document = layer_report_json(stack, reports)
        document["base_stats"] = [s.to_dict() for s in base_stats(stack)]
        if corruption:
            document["corruption"] = [
                {'index': c.layer_index, 'psnr_corrupted': _json_number(c.psnr_corrupted),
                 'psnr_predicted': _json_number(c.psnr_predicted)}
                for c in corruption
            ]
        sys.stdout.write(json.dumps(document, indent=2) + "\n")
    else:
        sys.stdout.write(f"{stack.width}x{stack.height}x{stack.channels} "
                         f"{stack.channel_mode.name.lower()} {stack.residual_mode.name.lower()} "
                         f"seed={stack.seed} layers={stack.layer_count}\n")
        sys.stdout.write(layer_report_table(reports))
        for c in corruption:
            sys.stdout.write(f"corrupt layer {c.layer_index}: {c.psnr_corrupted:.2f} dB "
                             f"(predicted {c.psnr_predicted:.2f} dB)\n")
    return EXIT_OK


def cmd_diff(args) -> int:
    a, b = read_pnm_file(args.a), read_pnm_file(args.b)
    result = diff_image(a, b, DiffMode(args.mode))
    logger.info(f"PSNR {psnr(a, b):.2f} dB")
    atomic_write(args.output, save_pnm(result))
    return EXIT_OK


def cmd_denoise(args) -> int:
    stack = read_container(args.input)
    cleaned = denoise(stack, args.blur_layers, args.layer_sigma, args.base_grey, args.base_sigma)
    atomic_write(args.output, serialize(cleaned))
    return EXIT_OK


def cmd_enlarge(args) -> int:
    stack = read_container(args.input)
    atomic_write(args.output, save_pnm(enlarge(stack, args.scale)))
    return EXIT_OK


def cmd_signal_encode(args) -> int:
    if args.pcm16le:
        with open(args.input, 'rb') as f:
            pcm = np.frombuffer(f.read(), dtype='<i2')
        signal = Signal1D.from_pcm(pcm, args.sample_rate or 0)
    else:
        signal = read_signal_file(args.input)
        if args.sample_rate is not None:
            signal = Signal1D(signal.samples, args.sample_rate, signal.scale, signal.offset)
    cfg = to_encoder_config(merge_settings(args), len(signal), 1, args.workers)
    atomic_write(args.output, serialize(encode1d(signal, cfg)))
    return EXIT_OK


def cmd_signal_decode(args) -> int:
    signal = decode1d(read_container(args.input))
    if args.pcm16le:
        pcm = np.clip(signal.to_pcm(), -32768, 32767).astype('<i2')
        atomic_write(args.output, pcm.tobytes())
    else:
        atomic_write(args.output, signal.samples.astype(np.uint8).tobytes())
        atomic_write(sidecar_path(args.output), format_sidecar(signal).encode('ascii'))
    return EXIT_OK


def cmd_index(args) -> int:
    stack = read_container(args.input)
    has_index = os.path.exists(os.path.join(args.index, MANIFEST_NAME))
    if args.index_command == "add":
        index = load_index(args.index) if has_index else StackIndex.for_stack(stack, args.preset)
        index = index_add(index, args.id, stack, os.path.abspath(args.input))
        save_index(index, args.index)
        return EXIT_OK

    if not has_index:
        raise FileNotFoundError(f"no index manifest in {args.index}")
    index = load_index(args.index)
    if args.shards > 1:
        results = search_sharded(index, stack, args.thresholds, args.shards, args.max_results, args.workers)
    else:
        results = coarse_to_fine_search(index, stack, args.thresholds, args.max_results)
    if args.json:
        sys.stdout.write(json.dumps([r.to_dict() for r in results], indent=2) + "\n")
    else:
        for rank, r in enumerate(results, start=1):
            scores = " ".join(f"{s:.4f}" for s in r.per_level_scores)
            sys.stdout.write(f"{rank:>3} {r.id} level={r.deepest_level_reached} "
                             f"{'accepted' if r.accepted else 'pruned'} {scores}\n")
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "preview": cmd_preview,
    "inspect": cmd_inspect,
    "diff": cmd_diff,
    "denoise": cmd_denoise,
    "enlarge": cmd_enlarge,
    "signal-encode": cmd_signal_encode,
    "signal-decode": cmd_signal_decode,
    "index": cmd_index,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Execute one command line and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except VerificationError as e:
        logger.error(f"Verification failed: {e}")
        return EXIT_VERIFY
    except ParameterError as e:
        logger.error(f"Invalid argument: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except (GBSError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FORMAT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
