"""
Versioned binary checkpoints of a TrainState.

Layout (little-endian): magic "BNCK", version u16, reserved u16, config hash
(32 raw bytes), manifest length u64, payload length u64, the JSON manifest
(sorted keys), raw float64 array bytes, then a SHA-256 digest of everything
before it. Identical states always serialize to identical bytes.
"""

import hashlib
import json
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from core.errors import ChecksumError, CheckpointError, IncompatibleVersionError
from params.latent import param_from_arrays, reconstructed_shape
from training.state import TrainState

logger = logging.getLogger(__name__)

MAGIC = b"BNCK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHH32sQQ")
_DIGEST_SIZE = 32
_DTYPE = np.dtype("<f8")


def _named_arrays(state: TrainState) -> Dict[str, np.ndarray]:
    arrays: Dict[str, np.ndarray] = {}
    for pid, p in state.params.items():
        for name, arr in p.arrays().items():
            arrays[f"param/{pid}/{name}"] = arr
    for layer, arr in state.alphas.items():
        arrays[f"alpha/{layer}"] = arr
    for name, arr in state.real.items():
        arrays[f"real/{name}"] = arr
    for name, arr in state.bn_stats.items():
        arrays[f"bn/{name}"] = arr
    for flat, buffers in state.moments.items():
        for slot, arr in buffers.items():
            arrays[f"moment/{slot}/{flat}"] = arr
    return arrays


def to_bytes(state: TrainState, config_hash: str) -> bytes:
    digest = bytes.fromhex(config_hash)
    if len(digest) != 32:
        raise CheckpointError(f"config hash must be 32 bytes, got {len(digest)}")

    entries = {}
    chunks = []
    offset = 0
    for name, arr in sorted(_named_arrays(state).items()):
        raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        entries[name] = {"dtype": _DTYPE.str, "offset": offset, "shape": list(arr.shape)}
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "arrays": entries,
        "lr": state.lr,
        "params": {
            pid: {"kind": str(p.kind), "shape": [int(d) for d in reconstructed_shape(p)]}
            for pid, p in state.params.items()
        },
        "step": state.step,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(chunks)
    body = _HEADER.pack(MAGIC, FORMAT_VERSION, 0, digest, len(manifest_bytes), len(payload))
    body += manifest_bytes + payload
    return body + hashlib.sha256(body).digest()


def from_bytes(data: bytes) -> Tuple[TrainState, str]:
    """
    Parse a checkpoint.

    Returns:
        (state, config hash hex)

    Raises:
        ChecksumError: digest mismatch or truncation
        IncompatibleVersionError: unsupported format version
        CheckpointError: any other structural problem
    """
    if len(data) < _HEADER.size + _DIGEST_SIZE:
        raise ChecksumError(f"checkpoint truncated ({len(data)} bytes)")
    body, stored = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != stored:
        raise ChecksumError("checkpoint digest does not match its contents")

    magic, version, _, cfg_digest, manifest_len, payload_len = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != FORMAT_VERSION:
        raise IncompatibleVersionError(version, FORMAT_VERSION)
    start = _HEADER.size
    if start + manifest_len + payload_len != len(body):
        raise CheckpointError("declared section lengths do not match the file size")

    try:
        manifest = json.loads(body[start : start + manifest_len])
    except ValueError as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc
    payload = body[start + manifest_len :]

    arrays = {}
    for name, entry in manifest["arrays"].items():
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + count * dtype.itemsize
        if end > len(payload):
            raise CheckpointError(f"array {name} runs past the payload")
        arrays[name] = (
            np.frombuffer(payload, dtype=dtype, count=count, offset=entry["offset"])
            .reshape(entry["shape"])
            .astype(np.float64)
        )
    return _state_from(manifest, arrays), cfg_digest.hex()


def _state_from(manifest: dict, arrays: Dict[str, np.ndarray]) -> TrainState:
    params = {}
    for pid, meta in manifest["params"].items():
        prefix = f"param/{pid}/"
        named = {k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)}
        params[pid] = param_from_arrays(meta["kind"], named, meta["shape"])

    def section(prefix: str) -> Dict[str, np.ndarray]:
        return {k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)}

    moments: Dict[str, Dict[str, np.ndarray]] = {}
    for slot in ("m", "v"):
        for flat, arr in section(f"moment/{slot}/").items():
            moments.setdefault(flat, {})[slot] = arr
    return TrainState(
        params=params,
        alphas=section("alpha/"),
        real=section("real/"),
        bn_stats=section("bn/"),
        moments=dict(sorted(moments.items())),
        lr=float(manifest["lr"]),
        step=int(manifest["step"]),
    )


def save_checkpoint(state: TrainState, path: Union[str, Path], config_hash: str) -> Path:
    """Write atomically: a crash leaves either the old file or the new one."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_bytes(state, config_hash)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.info("saved checkpoint step=%d to %s", state.step, path)
    return path


def load_checkpoint(
    path: Union[str, Path], expected_config_hash: Optional[str] = None
) -> Tuple[TrainState, str]:
    """
    Load a checkpoint; with `expected_config_hash`, refuse one written under another config.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    state, cfg_hash = from_bytes(path.read_bytes())
    if expected_config_hash is not None and cfg_hash != expected_config_hash:
        raise CheckpointError(
            f"{path} was written for config {cfg_hash[:12]}, current config is {expected_config_hash[:12]}"
        )
    logger.info("loaded checkpoint step=%d from %s", state.step, path)
    return state, cfg_hash
