"""Binary checkpoint container.

Layout (all integers little-endian u32):

    magic "CARN" | version | config-block length | config text (key=value lines)
    | record count | records...

Each record: name length, name (utf-8), rank, dims, then the values as
32-bit little-endian floats.  Trainable parameters come first in registry
order, followed by the batch-norm running statistics, so save -> load ->
save is byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import CarnConfig, CarnModel

MAGIC = b"CARN"
VERSION = 1


class CheckpointError(Exception):
    pass


def _config_to_text(config: CarnConfig) -> str:
    lines = [
        "enc_channels=" + ",".join(str(c) for c in config.enc_channels),
        "kernel=" + ",".join(str(k) for k in config.kernel),
        "stride=" + ",".join(str(s) for s in config.stride),
        f"input_channels={config.input_channels}",
        f"lstm_layers={config.lstm_layers}",
        f"lstm_hidden={config.lstm_hidden}",
        f"variant={config.variant}",
        f"freq_bins={config.freq_bins}",
        f"seed={config.seed}",
        f"gate_target={config.gate_target}",
    ]
    return "\n".join(lines) + "\n"


def _config_from_text(text: str) -> CarnConfig:
    kv = {}
    for line in text.strip().splitlines():
        key, _, value = line.partition("=")
        if not _:
            raise CheckpointError(f"malformed config line {line!r}")
        kv[key] = value
    try:
        return CarnConfig(
            enc_channels=tuple(int(c) for c in kv["enc_channels"].split(",")),
            kernel=tuple(int(k) for k in kv["kernel"].split(",")),
            stride=tuple(int(s) for s in kv["stride"].split(",")),
            input_channels=int(kv["input_channels"]),
            lstm_layers=int(kv["lstm_layers"]),
            lstm_hidden=int(kv["lstm_hidden"]),
            variant=kv["variant"],
            freq_bins=int(kv["freq_bins"]),
            seed=int(kv["seed"]),
            gate_target=kv.get("gate_target", "skip"),
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint config: {exc}") from exc


def _records(model: CarnModel):
    for p in model.parameters():
        yield p.name, p.tensor.data
    for name, buf in model.buffers().items():
        yield name, buf


def save_checkpoint(model: CarnModel, path) -> None:
    path = Path(path)
    records = list(_records(model))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        cfg = _config_to_text(model.config).encode("utf-8")
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(records)))
        for name, data in records:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("checkpoint truncated")
    return buf


def load_checkpoint(path, dtype=np.float32) -> CarnModel:
    """Rebuild the model from a checkpoint, validating every record shape."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(
                f"bad magic {magic!r}; not a model checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version > VERSION:
            raise CheckpointError(
                f"checkpoint version {version} is newer than supported {VERSION}; "
                "upgrade the package to load it")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4))
        config = _config_from_text(_read_exact(fh, cfg_len).decode("utf-8"))
        model = CarnModel(config, dtype=dtype)
        expected = dict(_records(model))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        if count != len(expected):
            raise CheckpointError(
                f"checkpoint has {count} records, model defines {len(expected)}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4))
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
            if name not in expected:
                raise CheckpointError(f"unknown record {name!r} in checkpoint")
            target = expected[name]
            if tuple(shape) != target.shape:
                raise CheckpointError(
                    f"record {name!r} has shape {tuple(shape)}, "
                    f"config implies {target.shape}")
            n = int(np.prod(shape)) if shape else 1
            values = np.frombuffer(_read_exact(fh, 4 * n), dtype="<f4")
            target[...] = values.reshape(shape).astype(target.dtype)
        if fh.read(1):
            raise CheckpointError("trailing bytes after last record")
    return model
