"""Command-line entry point: train, enhance, eval, info.

Exit codes: 0 success, 1 usage error, 2 audio format error, 3 checkpoint
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dsp import stft, istft, spec_to_tensor, tensor_to_spec
from .mask import Mask, apply_mask
from .metrics import MetricReport, evaluate
from .model import CarnConfig, CarnModel, count_parameters
from .tensor import Tensor
from .training import SynthConfig, TrainConfig, train_loop, write_loss_table
from .wavio import WavFormatError, read_wav, write_wav

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_CHECKPOINT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit_(EXIT_USAGE, f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    def __init__(self, code, message=""):
        super().__init__(message)
        self.code = code
        self.message = message


def _load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise SystemExit_(EXIT_USAGE, f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SystemExit_(EXIT_USAGE, f"config file {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise SystemExit_(EXIT_USAGE, f"config file {path} must hold a JSON object")
    return cfg


def cmd_train(args) -> int:
    sections = _load_config_file(args.config) if args.config else {}
    model_kw = dict(sections.get("model", {}))
    train_kw = dict(sections.get("train", {}))
    synth_kw = dict(sections.get("synth", {}))
    if args.variant:
        model_kw["variant"] = args.variant
    if args.seed is not None:
        model_kw["seed"] = args.seed
        train_kw["seed"] = args.seed
    if args.steps is not None:
        train_kw["max_steps"] = args.steps
    if args.batch is not None:
        train_kw["batch"] = args.batch
    try:
        model_cfg = CarnConfig(**model_kw)
        # desk-scale defaults for the CLI: small batches, 1 s clips
        train_kw.setdefault("batch", 4)
        train_cfg = TrainConfig(**train_kw)
        synth_kw.setdefault("clip_seconds", train_cfg.clip_seconds)
        synth_cfg = SynthConfig(**synth_kw)
    except (TypeError, ValueError) as exc:
        raise SystemExit_(EXIT_USAGE, f"bad configuration: {exc}")
    model = CarnModel(model_cfg)
    print(f"training {model_cfg.variant} model "
          f"({count_parameters(model)} parameters, seed {model_cfg.seed})")
    state, rows = train_loop(model, train_cfg, synth_cfg,
                             log_every=args.log_every)
    out = Path(args.out)
    curve = Path(args.curve) if args.curve else out.with_suffix(out.suffix + ".losses.csv")
    try:
        save_checkpoint(model, out)
        write_loss_table(rows, curve)
    except OSError as exc:
        raise SystemExit_(EXIT_USAGE, f"cannot write output: {exc}")
    print(f"stopped after {state.step} steps; checkpoint -> {out}, losses -> {curve}")
    return EXIT_OK


def enhance_waveform(model: CarnModel, noisy) -> "np.ndarray":
    """stft -> mask -> complex product -> istft, trimmed to the input length."""
    spec = stft(noisy)
    x = spec_to_tensor(spec).data[None, ...].astype(model.dtype)
    model.eval()
    out = model.forward(Tensor(x))
    mask_spec = tensor_to_spec(out.data[0], spec.params)
    est = apply_mask(Mask(mask_spec.real, mask_spec.imag), spec)
    enhanced = istft(est, out_length=len(noisy))
    return enhanced.samples


def cmd_enhance(args) -> int:
    model = load_checkpoint(args.model)
    noisy = read_wav(args.infile)
    enhanced = enhance_waveform(model, noisy)
    if not np.isfinite(enhanced).all():
        raise SystemExit_(EXIT_CHECKPOINT,
                          "enhancement produced non-finite samples; refusing to write")
    clipped = np.clip(enhanced, -1.0, 1.0)
    from .dsp import Waveform
    try:
        write_wav(args.out, Waveform(clipped))
    except OSError as exc:
        raise SystemExit_(EXIT_USAGE, f"cannot write output: {exc}")
    print(f"enhanced {args.infile} -> {args.out} ({len(clipped)} samples)")
    return EXIT_OK


def cmd_eval(args) -> int:
    ref = read_wav(args.ref)
    deg = read_wav(args.deg)
    try:
        report = evaluate(deg, ref)
    except ValueError as exc:
        raise SystemExit_(EXIT_USAGE, str(exc))
    print(MetricReport.CSV_HEADER)
    print(report.as_csv())
    return EXIT_OK


def cmd_info(args) -> int:
    model = load_checkpoint(args.model)
    cfg = model.config
    print(f"variant: {cfg.variant}")
    print(f"encoder channels: {list(cfg.enc_channels)}")
    print(f"kernel: {cfg.kernel}  stride: {cfg.stride}")
    print(f"lstm: {cfg.lstm_layers} layers, hidden {cfg.lstm_hidden}")
    print(f"freq bins: {cfg.freq_bins}  input channels: {cfg.input_channels}")
    print(f"seed: {cfg.seed}  gate target: {cfg.gate_target}")
    print(f"parameters: {count_parameters(model)}")
    for p in model.parameters():
        print(f"  {p.name}  {tuple(p.tensor.shape)}")
    for name, buf in model.buffers().items():
        print(f"  {name}  {tuple(buf.shape)}  [buffer]")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="carn",
                     description="speech enhancement with a complex-ratio-mask network")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on synthetic mixtures")
    p.add_argument("--config", help="JSON file with model/train/synth sections")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--steps", type=int, help="maximum training steps")
    p.add_argument("--seed", type=int, help="seed for init and data synthesis")
    p.add_argument("--variant", choices=["plain", "gated"])
    p.add_argument("--batch", type=int, help="mini-batch size (default 4)")
    p.add_argument("--curve", help="loss table path (default <out>.losses.csv)")
    p.add_argument("--log-every", type=int, default=0, help="print progress every N steps")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("enhance", help="denoise a WAV file")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--in", dest="infile", required=True, help="noisy input WAV")
    p.add_argument("--out", required=True, help="enhanced output WAV")
    p.set_defaults(fn=cmd_enhance)

    p = sub.add_parser("eval", help="compare enhanced audio against a reference")
    p.add_argument("--ref", required=True, help="clean reference WAV")
    p.add_argument("--deg", required=True, help="degraded/enhanced WAV")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("info", help="inspect a checkpoint")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.set_defaults(fn=cmd_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit_ as exc:
        if exc.message:
            print(exc.message, file=sys.stderr)
        return exc.code
    except WavFormatError as exc:
        print(f"audio format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
