"""Bit-exact binary snapshots of a stepper state.

Layout (all little-endian), see docs/FILE_FORMATS.md:

    header   magic "CBFCKPT\\0", version, N, K, μ, α, β, r, time, dt, initial ‖∇u‖²,
             step_count, checksum
    payload  (re, im) float64 pairs over k ∈ [−K, K]³ in lexicographic (k₁, k₂, k₃)
             order, the three velocity components one after the other

The checksum is the 8-byte BLAKE2b digest of the payload.
"""

import hashlib
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
import scipy.fft

from .errors import ChecksumMismatch, MagicMismatch, TruncatedPayload, VersionMismatch
from .integrator import StepperState
from .spectral import ModelParams, SpectralField, gradient_norm_sq

logger = logging.getLogger(__name__)

MAGIC = b"CBFCKPT\0"
VERSION = 2
HEADER = struct.Struct("<8sIII7dQQ")
CHECKPOINT_GLOB = "checkpoint_*.cbf"


def checkpoint_name(step_count: int) -> str:
    return f"checkpoint_{step_count:06d}.cbf"


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def encode_payload(field: SpectralField) -> bytes:
    # complex128 is stored as (re, im) float64 pairs already
    lexicographic = scipy.fft.fftshift(field.coefficients, axes=(1, 2, 3))
    return np.ascontiguousarray(lexicographic, dtype="<c16").tobytes()


def decode_payload(payload: bytes, K: int, grid_size: int) -> SpectralField:
    n = 2 * K + 1
    lexicographic = np.frombuffer(payload, dtype="<c16").reshape(3, n, n, n)
    return SpectralField(scipy.fft.ifftshift(lexicographic, axes=(1, 2, 3)), grid_size)


def dumps(state: StepperState) -> bytes:
    payload = encode_payload(state.field)
    p = state.params
    initial_gradient = state.initial_gradient
    if initial_gradient is None:
        initial_gradient = gradient_norm_sq(state.field)
    header = HEADER.pack(MAGIC, VERSION, state.field.grid_size, state.field.resolution,
                         p.mu, p.alpha, p.beta, p.r, state.time, state.dt, initial_gradient,
                         state.step_count, _checksum(payload))
    return header + payload


def loads(blob: bytes) -> StepperState:
    if len(blob) < HEADER.size:
        raise TruncatedPayload(f"checkpoint holds {len(blob)} bytes, header alone needs {HEADER.size}")
    (magic, version, N, K, mu, alpha, beta, r, time, dt, initial_gradient,
     step_count, checksum) = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MagicMismatch(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this build reads {VERSION}")
    expected = 3 * (2 * K + 1) ** 3 * 16
    payload = blob[HEADER.size:]
    if len(payload) != expected:
        raise TruncatedPayload(f"payload holds {len(payload)} bytes, K={K} needs {expected}")
    if _checksum(payload) != checksum:
        raise ChecksumMismatch("payload checksum does not match the header")
    return StepperState(
        field=decode_payload(payload, K, N),
        time=time,
        dt=dt,
        step_count=step_count,
        params=ModelParams(mu=mu, alpha=alpha, beta=beta, r=r),
        initial_gradient=initial_gradient,
    )


def save_checkpoint(state: StepperState, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(state))
    logger.info("checkpoint written: %s (t=%.6g, step %d)", path, state.time, state.step_count)
    return path


def load_checkpoint(path: Union[str, Path]) -> StepperState:
    return loads(Path(path).read_bytes())
