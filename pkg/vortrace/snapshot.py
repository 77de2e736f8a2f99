# -*- coding: utf-8 -*-
"""
Binary field snapshots.

Layout (little-endian, no padding):
    header   magic "VTRC" | u32 version | u32 cutoff N | f64 time | u32 mode count
    modes    per half-lattice mode: i32 k1 | i32 k2 | f64 re | f64 im
    rng      8-byte algorithm tag | u64 seed | u64 stream | u64 counter | u32 flags

The square cutoff max(|k1|, |k2|) <= N is implied by the header.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .dynamics import EquationKind, SolverOptions, SolverState
from .errors import ArgumentError, SnapshotFormatError
from .noise import ALGORITHM, NoiseSpec, RngState
from .spectral import SpectralField, mode_set

logger = logging.getLogger(__name__)

MAGIC = b"VTRC"
VERSION = 1
RNG_TAG = b"PHILOX64"

HEADER = struct.Struct("<4sIIdI")
MODE = struct.Struct("<iidd")
RNG_BLOCK = struct.Struct("<8sQQQI")

FLAG_ANTITHETIC = 0x1


@dataclass
class Snapshot:
    field: SpectralField
    t: float = 0.0
    rng: RngState = field(default_factory=lambda: RngState(0))

    @property
    def cutoff(self) -> int:
        return self.field.cutoff

    @classmethod
    def from_state(cls, state: SolverState) -> "Snapshot":
        return cls(state.field, state.t, state.rng.copy())

    def to_state(self, kind: EquationKind, noise: NoiseSpec, dt: float,
                 options: Optional[SolverOptions] = None) -> SolverState:
        """Resume: the step index is recovered from t / dt, which must be an integer."""
        steps = int(round(self.t / dt))
        if abs(steps * dt - self.t) > 1e-9 * max(1.0, abs(self.t)):
            raise ArgumentError(f"snapshot time {self.t} is not a multiple of dt={dt}")
        return SolverState(kind, self.field, dt, self.rng.copy(), noise, steps, options or SolverOptions())


def encode(snap: Snapshot) -> bytes:
    ms = snap.field.modes
    parts = [HEADER.pack(MAGIC, VERSION, snap.cutoff, float(snap.t), ms.size)]
    c = snap.field.coeffs
    for i in range(ms.size):
        parts.append(MODE.pack(int(ms.k1[i]), int(ms.k2[i]), float(c[i].real), float(c[i].imag)))
    flags = FLAG_ANTITHETIC if snap.rng.antithetic else 0
    parts.append(RNG_BLOCK.pack(RNG_TAG, snap.rng.seed, snap.rng.stream, snap.rng.counter, flags))
    return b"".join(parts)


def decode(blob: bytes) -> Snapshot:
    if len(blob) < HEADER.size:
        raise SnapshotFormatError(f"snapshot truncated: {len(blob)} bytes, header needs {HEADER.size}")
    magic, version, cutoff, t, count = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    if cutoff < 1:
        raise SnapshotFormatError(f"invalid cutoff {cutoff}")
    ms = mode_set(cutoff)
    if count != ms.size:
        raise SnapshotFormatError(f"cutoff {cutoff} has {ms.size} modes, header says {count}")
    expected = HEADER.size + count * MODE.size + RNG_BLOCK.size
    if len(blob) != expected:
        kind = "truncated" if len(blob) < expected else "has trailing bytes"
        raise SnapshotFormatError(f"snapshot {kind}: {len(blob)} bytes, expected {expected}")

    coeffs = np.zeros(ms.size, dtype=complex)
    seen = np.zeros(ms.size, dtype=bool)
    offset = HEADER.size
    for _ in range(count):
        k1, k2, re, im = MODE.unpack_from(blob, offset)
        offset += MODE.size
        i = ms.index.get((k1, k2))
        if i is None or seen[i]:
            raise SnapshotFormatError(f"unexpected or repeated mode ({k1},{k2}) for cutoff {cutoff}")
        seen[i] = True
        coeffs[i] = complex(re, im)

    tag, seed, stream, counter, flags = RNG_BLOCK.unpack_from(blob, offset)
    if tag != RNG_TAG:
        raise SnapshotFormatError(f"unknown RNG algorithm tag {tag!r}")
    rng = RngState(seed, stream, counter, bool(flags & FLAG_ANTITHETIC), ALGORITHM)
    return Snapshot(SpectralField(cutoff, coeffs), float(t), rng)


def save(path: Union[str, Path], snap: Snapshot) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(snap))
    logger.debug("snapshot N=%d t=%g -> %s", snap.cutoff, snap.t, path)
    return path


def load(path: Union[str, Path]) -> Snapshot:
    return decode(Path(path).read_bytes())
