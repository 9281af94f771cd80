# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""RunRecord: the ordered event log of a sampler run, and its CSV and binary codecs.

CSV layout: `# key=value` header lines followed by one row per applied update with columns
step, delay, delay_min, wall_ns, [worker_id, version_at_read, version_at_apply,] x0..x{d-1}.
The x columns are empty for steps that fall between recording strides.

Binary layout (little-endian): the header struct below, then x0 (d x f8), delays (n x i8),
[delays_min (n x i8)], wall_ns (n x i8), [worker_id, version_at_read, version_at_apply
(3 x n x i8)], iterates (n_rec x d x f8), [resolved (n x d x f8)].
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from async_sgld.errors import DataError, DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

MAGIC = b"SGLDREC1"
# magic, d, n, n_rec, seed, tau_max, stride, flags, scheme, mode, digest
HEADER = struct.Struct("<8sIQQQQQI8s16s32s")

FLAG_DELAYS_MIN = 1
FLAG_EXEC_COLUMNS = 2
FLAG_RESOLVED = 4

EXEC_COLUMNS = ("worker_id", "version_at_read", "version_at_apply")

PathLike = Union[str, Path]


@dataclass(eq=False)
class ShadowHistory:
    """Every state a shared store ever exposed, kept by test builds of the executor.

    Attributes:
        vectors: committed vectors in version order, x0 first (whole-vector commits).
        coordinate_values: per coordinate, every value ever written to it, x0 first
            (per-coordinate writes).
    """

    vectors: Optional[np.ndarray] = None
    coordinate_values: Optional[List[np.ndarray]] = None


def _int_array(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got shape {arr.shape}")
    return arr


@dataclass(eq=False)
class RunRecord:
    """Event log of one run.

    Step k (0-based) is the (k+1)-th applied update. `iterates[j]` is the iterate after
    step (j+1)*stride - 1, so a run of n steps holds n // stride iterates; `x0` is kept
    separately.

    Attributes:
        x0: initial iterate.
        iterates: recorded iterates, shape (n // stride, d).
        delays: staleness of every step; the per-coordinate maximum for inconsistent reads.
        wall_ns: nanoseconds since run start at which each step was applied.
        seed: master seed.
        tau_max: delay bound the run was configured with (observed maximum when unbounded).
        stride: iterate recording stride.
        scheme: sim, sync, wcon or wicon.
        mode: consistent or inconsistent read discipline.
        config_digest: SHA-256 hex digest of the producing config, empty when ad hoc.
        delays_min: per-coordinate minimum staleness (inconsistent reads only).
        worker_id, version_at_read, version_at_apply: executor event columns.
        resolved: every stale vector x_hat_k, present when staleness tracking was on.
        shadow: store history for soundness checks; never serialized.
    """

    x0: np.ndarray
    iterates: np.ndarray
    delays: np.ndarray
    wall_ns: np.ndarray
    seed: int
    tau_max: int
    stride: int = 1
    scheme: str = "sim"
    mode: str = "consistent"
    config_digest: str = ""
    delays_min: Optional[np.ndarray] = None
    worker_id: Optional[np.ndarray] = None
    version_at_read: Optional[np.ndarray] = None
    version_at_apply: Optional[np.ndarray] = None
    resolved: Optional[np.ndarray] = None
    shadow: Optional[ShadowHistory] = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        if self.x0.ndim != 1:
            raise DimensionError(f"x0 must be a vector, got shape {self.x0.shape}")
        if self.stride < 1:
            raise InvalidInputError(f"stride must be >= 1, got {self.stride}")
        n = int(np.asarray(self.delays).shape[0])
        self.delays = _int_array(self.delays, n, "delays")
        self.wall_ns = _int_array(self.wall_ns, n, "wall_ns")
        for name in ("delays_min",) + EXEC_COLUMNS:
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, _int_array(value, n, name))
        self.iterates = np.asarray(self.iterates, dtype=np.float64).reshape(-1, self.dim)
        if self.iterates.shape[0] != n // self.stride:
            raise DimensionError(
                f"{n} steps at stride {self.stride} need {n // self.stride} iterates, "
                f"got {self.iterates.shape[0]}"
            )
        if self.resolved is not None:
            self.resolved = np.asarray(self.resolved, dtype=np.float64).reshape(-1, self.dim)
            if self.resolved.shape[0] != n:
                raise DimensionError("resolved vectors must cover every step")

    @property
    def dim(self) -> int:
        """Dimension of the iterates."""
        return int(self.x0.shape[0])

    @property
    def n_steps(self) -> int:
        """Applied updates."""
        return int(self.delays.shape[0])

    @property
    def iter_index(self) -> np.ndarray:
        """1-based update count after which each recorded iterate was taken."""
        return self.stride * np.arange(1, self.iterates.shape[0] + 1, dtype=np.int64)

    @property
    def has_exec_columns(self) -> bool:
        """Whether executor columns are present."""
        return self.worker_id is not None

    def full_history(self) -> np.ndarray:
        """x_0, x_1, ..., x_n as rows; requires stride 1."""
        if self.stride != 1:
            raise InvalidInputError("the full history needs a record taken at stride 1")
        return np.vstack([self.x0[None, :], self.iterates])

    def final(self) -> np.ndarray:
        """Last iterate, x0 for an empty record."""
        return self.iterates[-1] if self.iterates.shape[0] else self.x0

    def truncated(self, n_steps: int) -> "RunRecord":
        """The record of the first `n_steps` steps."""
        n_steps = max(0, min(n_steps, self.n_steps))

        def cut(arr: Optional[np.ndarray]) -> Optional[np.ndarray]:
            return None if arr is None else arr[:n_steps]

        return RunRecord(
            x0=self.x0,
            iterates=self.iterates[: n_steps // self.stride],
            delays=self.delays[:n_steps],
            wall_ns=self.wall_ns[:n_steps],
            seed=self.seed,
            tau_max=self.tau_max,
            stride=self.stride,
            scheme=self.scheme,
            mode=self.mode,
            config_digest=self.config_digest,
            delays_min=cut(self.delays_min),
            worker_id=cut(self.worker_id),
            version_at_read=cut(self.version_at_read),
            version_at_apply=cut(self.version_at_apply),
            resolved=cut(self.resolved),
        )

    def identical(self, other: "RunRecord") -> bool:
        """Bit-for-bit equality of every field."""
        if (self.seed, self.tau_max, self.stride, self.scheme, self.mode, self.config_digest) != (
            other.seed,
            other.tau_max,
            other.stride,
            other.scheme,
            other.mode,
            other.config_digest,
        ):
            return False
        arrays = ("x0", "iterates", "delays", "wall_ns", "delays_min", "resolved")
        for name in arrays + EXEC_COLUMNS:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape or a.tobytes() != b.tobytes()):
                return False
        return True


# --- CSV --------------------------------------------------------------------------------


def _meta(record: RunRecord) -> Dict[str, str]:
    return {
        "d": str(record.dim),
        "seed": str(record.seed),
        "tau_max": str(record.tau_max),
        "stride": str(record.stride),
        "scheme": record.scheme,
        "mode": record.mode,
        "config_digest": record.config_digest,
        "x0": " ".join(repr(float(v)) for v in record.x0),
    }


def record_frame(record: RunRecord) -> pd.DataFrame:
    """One row per step; iterate columns are NaN between strides."""
    n, d = record.n_steps, record.dim
    data: Dict[str, np.ndarray] = {
        "step": np.arange(1, n + 1, dtype=np.int64),
        "delay": record.delays,
        "delay_min": record.delays if record.delays_min is None else record.delays_min,
        "wall_ns": record.wall_ns,
    }
    if record.has_exec_columns:
        for name in EXEC_COLUMNS:
            data[name] = getattr(record, name)
    xs = np.full((n, d), np.nan)
    xs[record.iter_index - 1] = record.iterates
    for i in range(d):
        data[f"x{i}"] = xs[:, i]
    return pd.DataFrame(data)


def write_frame_csv(frame: pd.DataFrame, path: PathLike, meta: Dict[str, str]) -> None:
    """Write `frame` after one `# key=value` line per metadata entry."""
    path = Path(path)
    with path.open("w", newline="") as out:
        for key, value in meta.items():
            out.write(f"# {key}={value}\n")
        frame.to_csv(out, index=False)


def read_frame_csv(path: PathLike) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Inverse of `write_frame_csv`; floats are read back bit-exactly."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path} does not exist")
    meta: Dict[str, str] = {}
    with path.open() as src:
        for line in src:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
    try:
        frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    except (ValueError, pd.errors.ParserError) as exc:
        raise DataError(f"malformed CSV file {path}: {exc}") from exc
    return frame, meta


def write_record_csv(record: RunRecord, path: PathLike) -> None:
    """Write the record as CSV, one row per applied update."""
    write_frame_csv(record_frame(record), path, _meta(record))
    logger.debug("wrote %d record rows to %s", record.n_steps, path)


def read_record_csv(path: PathLike) -> RunRecord:
    """Read a record written by `write_record_csv`."""
    frame, meta = read_frame_csv(path)
    try:
        d = int(meta["d"])
        x0 = np.array([float(v) for v in meta["x0"].split()], dtype=np.float64)
        stride = int(meta["stride"])
        xs = frame[[f"x{i}" for i in range(d)]].to_numpy(dtype=np.float64)
        delays = frame["delay"].to_numpy(dtype=np.int64)
        delays_min = frame["delay_min"].to_numpy(dtype=np.int64)
        wall_ns = frame["wall_ns"].to_numpy(dtype=np.int64)
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed record file {path}: {exc}") from exc

    n = len(frame)
    kept = np.arange(stride, n + 1, stride) - 1
    exec_columns = {
        name: frame[name].to_numpy(dtype=np.int64) if name in frame else None
        for name in EXEC_COLUMNS
    }
    return RunRecord(
        x0=x0,
        iterates=xs[kept],
        delays=delays,
        wall_ns=wall_ns,
        seed=int(meta["seed"]),
        tau_max=int(meta["tau_max"]),
        stride=stride,
        scheme=meta["scheme"],
        mode=meta["mode"],
        config_digest=meta.get("config_digest", ""),
        delays_min=None if meta["mode"] == "consistent" else delays_min,
        **exec_columns,
    )


# --- binary -----------------------------------------------------------------------------


def encode_record(record: RunRecord) -> bytes:
    """Versioned little-endian binary form of a record."""
    flags = 0
    if record.delays_min is not None:
        flags |= FLAG_DELAYS_MIN
    if record.has_exec_columns:
        flags |= FLAG_EXEC_COLUMNS
    if record.resolved is not None:
        flags |= FLAG_RESOLVED
    digest = bytes.fromhex(record.config_digest) if record.config_digest else b""
    header = HEADER.pack(
        MAGIC,
        record.dim,
        record.n_steps,
        record.iterates.shape[0],
        record.seed,
        record.tau_max,
        record.stride,
        flags,
        record.scheme.encode("ascii"),
        record.mode.encode("ascii"),
        digest,
    )
    chunks: List[bytes] = [header, record.x0.astype("<f8").tobytes()]
    chunks.append(record.delays.astype("<i8").tobytes())
    if record.delays_min is not None:
        chunks.append(record.delays_min.astype("<i8").tobytes())
    chunks.append(record.wall_ns.astype("<i8").tobytes())
    if record.has_exec_columns:
        for name in EXEC_COLUMNS:
            chunks.append(getattr(record, name).astype("<i8").tobytes())
    chunks.append(record.iterates.astype("<f8").tobytes())
    if record.resolved is not None:
        chunks.append(record.resolved.astype("<f8").tobytes())
    return b"".join(chunks)


@dataclass
class _Reader:
    buf: bytes
    offset: int = field(default=HEADER.size)

    def take(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.buf):
            raise DataError("record frame is truncated")
        arr = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return arr.astype(dtype[1:])


def decode_record(buf: bytes) -> RunRecord:
    """Inverse of `encode_record`; raises DataError on malformed input."""
    if len(buf) < HEADER.size:
        raise DataError("record frame is shorter than its header")
    fields = HEADER.unpack_from(buf)
    magic, d, n, n_rec, seed, tau_max, stride, flags, scheme, mode, digest = fields
    if magic != MAGIC:
        raise DataError(f"bad record magic {magic!r}")
    reader = _Reader(buf)
    x0 = reader.take("<f8", d)
    delays = reader.take("<i8", n)
    delays_min = reader.take("<i8", n) if flags & FLAG_DELAYS_MIN else None
    wall_ns = reader.take("<i8", n)
    exec_columns: Dict[str, Optional[np.ndarray]] = {name: None for name in EXEC_COLUMNS}
    if flags & FLAG_EXEC_COLUMNS:
        for name in EXEC_COLUMNS:
            exec_columns[name] = reader.take("<i8", n)
    iterates = reader.take("<f8", n_rec * d).reshape(n_rec, d)
    resolved = reader.take("<f8", n * d).reshape(n, d) if flags & FLAG_RESOLVED else None
    if reader.offset != len(buf):
        raise DataError(f"{len(buf) - reader.offset} trailing bytes after the record frame")
    return RunRecord(
        x0=x0,
        iterates=iterates,
        delays=delays,
        wall_ns=wall_ns,
        seed=seed,
        tau_max=tau_max,
        stride=stride,
        scheme=scheme.rstrip(b"\0").decode("ascii"),
        mode=mode.rstrip(b"\0").decode("ascii"),
        config_digest=digest.hex() if digest.strip(b"\0") else "",
        delays_min=delays_min,
        resolved=resolved,
        **exec_columns,
    )


def write_record_bin(record: RunRecord, path: PathLike) -> None:
    """Write `encode_record(record)` to `path`."""
    Path(path).write_bytes(encode_record(record))


def read_record_bin(path: PathLike) -> RunRecord:
    """Read a record written by `write_record_bin`."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"record file {path} does not exist")
    return decode_record(path.read_bytes())
