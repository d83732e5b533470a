"""Binary model checkpoints.

Layout, little-endian throughout::

    b"NIF1"  u32 version
    u32 n    n bytes of UTF-8 JSON (the model config)
    u32 k    k segments of: u64 count, count * f64

Segment order is fixed per model kind (see ``Model.state_segments``).
"""

import json
import logging
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .models import ModelConfig, model_config_json, model_skeleton, parse_model_config
from .nets import Model
from .storage import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"NIF1"
VERSION = 1


def encode_checkpoint(model: Model) -> bytes:
    config = json.dumps(model_config_json(model.config), sort_keys=True).encode("utf-8")
    segments = model.state_segments()
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(config)), config]
    parts.append(struct.pack("<I", len(segments)))
    for values in segments.values():
        arr = np.ascontiguousarray(values, dtype="<f8").reshape(-1)
        parts.append(struct.pack("<Q", arr.size))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"Checkpoint truncated while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return int(struct.unpack("<I", self.take(4, what))[0])

    def u64(self, what: str) -> int:
        return int(struct.unpack("<Q", self.take(8, what))[0])


def decode_checkpoint(data: bytes) -> Model:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise ParseError("Not a nifkit checkpoint (bad magic)")
    version = r.u32("version")
    if version != VERSION:
        raise ParseError(f"Unsupported checkpoint version {version}")
    raw = r.take(r.u32("config length"), "config")
    try:
        payload = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"Checkpoint config is not valid JSON: {e}") from e
    try:
        cfg: ModelConfig = parse_model_config(payload)
    except InvalidInputError as e:
        raise ParseError(str(e)) from e
    model = model_skeleton(cfg)
    expected = model.state_segments()
    count = r.u32("segment count")
    if count != len(expected):
        raise ParseError(f"Checkpoint has {count} segments, config needs {len(expected)}")
    loaded = {}
    for name, ref in expected.items():
        n = r.u64(f"{name} length")
        if n != ref.size:
            raise ParseError(f"Segment {name} has {n} values, config needs {ref.size}")
        loaded[name] = np.frombuffer(r.take(8 * n, name), dtype="<f8").astype(np.float64)
    if r.pos != len(data):
        raise ParseError(f"{len(data) - r.pos} trailing bytes after last segment")
    model.load_segments(loaded)
    return model


def write_checkpoint(path: Path, model: Model) -> None:
    atomic_write_bytes(Path(path), encode_checkpoint(model))
    logger.info(f"wrote checkpoint {path} ({model.n_params} trainables)")


def read_checkpoint(path: Path) -> Model:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())
