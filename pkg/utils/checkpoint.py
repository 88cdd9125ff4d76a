"""
Binary checkpoints

Layout: 8-byte magic b"ENSLAB01", header (version, n, box_len, time,
variant) as little-endian 64-bit values, then rho, w1..w3, u1..u3 as
little-endian float64 arrays in x-fastest order.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from utils.errors import CheckpointError
from utils.solver import VARIANTS
from utils.spectral_core import make_grid
from utils.state_model import FluidState

MAGIC = b"ENSLAB01"
VERSION = 1
_HEADER = np.dtype([
    ("version", "<i8"),
    ("n", "<i8"),
    ("box_len", "<f8"),
    ("time", "<f8"),
    ("variant", "<i8"),
])
_FIELDS = 7


@dataclass
class Checkpoint:
    state: FluidState
    variant: str = "nonconservative"
    version: int = VERSION


def write_checkpoint(state: FluidState, path: Path, variant: str = "nonconservative") -> Path:
    if variant not in VARIANTS:
        raise CheckpointError(f"unknown scheme variant {variant!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    header = np.zeros(1, dtype=_HEADER)
    header["version"] = VERSION
    header["n"] = state.grid.n
    header["box_len"] = state.grid.box_len
    header["time"] = state.time
    header["variant"] = VARIANTS.index(variant)

    arrays = [state.rho, *state.w, *state.u]
    tmp = path.with_suffix(path.suffix + ".part")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(header.tobytes())
        for arr in arrays:
            f.write(np.asarray(arr, dtype="<f8").ravel(order="F").tobytes())
    tmp.replace(path)
    logger.debug(f"Checkpoint t={state.time:.6g} -> {path}")
    return path


def read_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:len(MAGIC)]!r}")

    offset = len(MAGIC)
    if len(data) < offset + _HEADER.itemsize:
        raise CheckpointError(f"{path}: truncated header")
    header = np.frombuffer(data, dtype=_HEADER, count=1, offset=offset)[0]
    if int(header["version"]) != VERSION:
        raise CheckpointError(f"{path}: version {int(header['version'])} != {VERSION}")
    variant_index = int(header["variant"])
    if not 0 <= variant_index < len(VARIANTS):
        raise CheckpointError(f"{path}: unknown variant code {variant_index}")

    n = int(header["n"])
    offset += _HEADER.itemsize
    expected = offset + _FIELDS * n ** 3 * 8
    if len(data) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes for n={n}, found {len(data)} (truncated?)")

    flat = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    fields = [flat[i * n ** 3:(i + 1) * n ** 3].reshape((n, n, n), order="F") for i in range(_FIELDS)]
    grid = make_grid(n, float(header["box_len"]))
    state = FluidState(
        grid=grid,
        time=float(header["time"]),
        rho=np.ascontiguousarray(fields[0]),
        w=np.ascontiguousarray(np.stack(fields[1:4])),
        u=np.ascontiguousarray(np.stack(fields[4:7])),
    )
    return Checkpoint(state=state, variant=VARIANTS[variant_index])
