# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Multi-worker shared-memory SGLD.

Three schemes run P threads against one `SharedParamStore`:

    - sync: every round all workers read the same x_k behind a barrier; the barrier action
      (the updater) sums their contributions and applies one step.
    - wcon: workers take consistent snapshots through a sequence counter and apply delayed
      steps under an exclusive write lock.
    - wicon: workers read and write coordinates one at a time with no lock at all.

Staleness is counted in applied updates. Worker w draws noise and minibatches from
`worker_streams(seed, w)` only, and every scheme applies the same `em_update` arithmetic, so
a single worker reproduces the simulator with tau = 0.
"""

import itertools
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from async_sgld.errors import DataError, InvalidInputError, NumericalError
from async_sgld.langevin import NoiseParams, StepSchedule, aux_stream, em_update, worker_streams
from async_sgld.potentials import FULL_BATCH, BatchSpec, Potential
from async_sgld.records import RunRecord, ShadowHistory

logger = logging.getLogger(__name__)

SNAPSHOT = "snapshot"
COORDINATE = "coordinate"
BARRIER = "barrier"
STORE_MODES = (SNAPSHOT, COORDINATE, BARRIER)

SYNC_NOISE_MODES = ("per_worker", "per_round")

_CELL = np.dtype([("value", np.float64), ("version", np.int64)])


class SharedParamStore:
    """The shared parameter vector and its update version.

    snapshot mode is a seqlock: `_seq` is odd while a commit is in flight and the version is
    `_seq >> 1`. coordinate mode keeps (value, version) cells that are each read and written
    in one step, and hands out update ids under a small lock. barrier mode is written
    only by the sync updater.
    """

    def __init__(self, x0: np.ndarray, mode: str, read_lock: bool = False, shadow: bool = False):
        if mode not in STORE_MODES:
            raise InvalidInputError(f"unknown store mode {mode!r}")
        x0 = np.array(x0, dtype=np.float64)
        self.mode = mode
        self.dim = int(x0.shape[0])
        self.read_lock = read_lock
        self.write_lock = threading.Lock()
        self._seq = 0
        self._values = x0.copy()
        self._cells = np.empty(self.dim, dtype=_CELL)
        self._cells["value"] = x0
        self._cells["version"] = 0
        self._claim_lock = threading.Lock()
        self._claimed = 0

        self._shadow_vectors: Optional[List[np.ndarray]] = [x0.copy()] if shadow else None
        self._shadow_coords: Optional[List[List[float]]] = (
            [[float(v)] for v in x0] if shadow else None
        )
        self._shadow_lock = threading.Lock()

    @property
    def version(self) -> int:
        """Number of committed updates."""
        if self.mode == COORDINATE:
            return self._claimed
        return self._seq >> 1

    def values(self) -> np.ndarray:
        """Copy of the current contents; coordinate mode may mix updates."""
        if self.mode == COORDINATE:
            return self._cells["value"].copy()
        return self._values.copy()

    # --- whole-vector access ---

    def read_snapshot(self) -> Tuple[np.ndarray, int]:
        """A vector that existed at a single version, and that version."""
        if self.read_lock:
            with self.write_lock:
                return self._values.copy(), self._seq >> 1
        while True:
            before = self._seq
            if before & 1:
                time.sleep(0)
                continue
            snapshot = self._values.copy()
            if self._seq == before:
                return snapshot, before >> 1

    def commit(self, x_next: np.ndarray) -> int:
        """Publish `x_next` as the next version; the caller holds `write_lock`."""
        self._seq += 1
        self._values[:] = x_next
        self._seq += 1
        if self._shadow_vectors is not None:
            self._shadow_vectors.append(x_next.copy())
        return self._seq >> 1

    # --- per-coordinate access ---

    def read_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Read every coordinate independently; returns values and the versions that wrote them."""
        values = np.empty(self.dim)
        versions = np.empty(self.dim, dtype=np.int64)
        for i in range(self.dim):
            values[i], versions[i] = self._cells[i].item()
        return values, versions

    def claim(self) -> int:
        """Next update id (0-based); the update applies as version id + 1."""
        with self._claim_lock:
            update_id = self._claimed
            self._claimed += 1
        return update_id

    def load(self, i: int) -> float:
        """Current value of one coordinate."""
        return float(self._cells[i].item()[0])

    def store(self, i: int, value: float, version: int) -> None:
        """Write one coordinate and bump its version."""
        self._cells[i] = (value, version)
        if self._shadow_coords is not None:
            with self._shadow_lock:
                self._shadow_coords[i].append(value)

    def shadow(self) -> Optional[ShadowHistory]:
        """The recorded history, or None when shadowing is off."""
        if self._shadow_vectors is not None and self.mode != COORDINATE:
            return ShadowHistory(vectors=np.array(self._shadow_vectors))
        if self._shadow_coords is not None and self.mode == COORDINATE:
            written = [np.array(vals, dtype=np.float64) for vals in self._shadow_coords]
            return ShadowHistory(coordinate_values=written)
        return None


@dataclass(frozen=True)
class WorkerConfig:
    """Worker pool settings.

    Attributes:
        workers: worker count P.
        seed: master seed; worker w uses `worker_streams(seed, w)`.
        batch: minibatch of every stochastic gradient.
        iterations: total applied updates (rounds for sync).
        wall_clock_s: stop after this many seconds; `iterations` still caps the run.
        stride: iterate recording stride.
        track_staleness: keep every stale vector in the record.
        shadow: keep the store history for `validate_shadow`; needs `track_staleness`.
        wall_clock: stamp events with monotonic nanoseconds, else zeros.
        config_digest: digest copied into the record.
    """

    workers: int
    seed: int
    batch: BatchSpec = FULL_BATCH
    iterations: Optional[int] = None
    wall_clock_s: Optional[float] = None
    stride: int = 1
    track_staleness: bool = False
    shadow: bool = False
    wall_clock: bool = True
    config_digest: str = ""

    def validate(self) -> None:
        """Raise InvalidInputError on an unusable configuration."""
        if self.workers < 1:
            raise InvalidInputError(f"need at least one worker, got {self.workers}")
        if self.iterations is None and self.wall_clock_s is None:
            raise InvalidInputError("set an iteration budget or a wall-clock budget")
        if self.iterations is not None and self.iterations < 1:
            raise InvalidInputError(f"iteration budget must be >= 1, got {self.iterations}")
        if self.wall_clock_s is not None and self.wall_clock_s <= 0.0:
            raise InvalidInputError("wall-clock budget must be positive")
        if self.stride < 1:
            raise InvalidInputError(f"stride must be >= 1, got {self.stride}")
        if self.shadow and not self.track_staleness:
            raise InvalidInputError("shadow history needs staleness tracking")


@dataclass
class _Event:
    worker_id: int
    version_at_read: int
    version_at_apply: int
    wall_ns: int
    delay: int
    delay_min: int
    x_after: Optional[np.ndarray] = None
    x_hat: Optional[np.ndarray] = None


@dataclass
class _Run:
    """State shared by the threads of one run."""

    p: Potential
    s: StepSchedule
    noise: NoiseParams
    wc: WorkerConfig
    store: SharedParamStore
    t0: int = field(default_factory=time.monotonic_ns)
    stop: threading.Event = field(default_factory=threading.Event)
    errors: List[BaseException] = field(default_factory=list)
    events: Dict[int, List[_Event]] = field(default_factory=dict)

    def __post_init__(self):
        self._tickets = itertools.count()
        self._deadline = (
            None if self.wc.wall_clock_s is None else self.t0 + int(self.wc.wall_clock_s * 1e9)
        )
        self.events = {w: [] for w in range(self.wc.workers)}

    def expired(self) -> bool:
        return self._deadline is not None and time.monotonic_ns() >= self._deadline

    def take_ticket(self) -> bool:
        """Whether the caller may start one more update."""
        if self.stop.is_set() or self.expired():
            return False
        return self.wc.iterations is None or next(self._tickets) < self.wc.iterations

    def now(self) -> int:
        return time.monotonic_ns() - self.t0 if self.wc.wall_clock else 0

    def keep_iterate(self, version: int) -> bool:
        return version % self.wc.stride == 0

    def guarded(self, target: Callable[[int], None], worker_id: int) -> None:
        try:
            target(worker_id)
        except BaseException as exc:  # re-raised in the calling thread
            self.errors.append(exc)
            self.stop.set()


def _start(run: _Run, target: Callable[[int], None], name: str) -> None:
    threads = [
        threading.Thread(target=run.guarded, args=(target, w), name=f"{name}-worker-{w}")
        for w in range(run.wc.workers)
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if run.errors:
        first = run.errors[0]
        if isinstance(first, threading.BrokenBarrierError) and len(run.errors) > 1:
            first = next(e for e in run.errors if not isinstance(e, threading.BrokenBarrierError))
        raise first


def _check_finite(x: np.ndarray, version: int) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"iterate became non-finite at update {version}")


def _assemble(run: _Run, scheme: str, x0: np.ndarray, tau_max: Optional[int]) -> RunRecord:
    events = sorted(
        (e for log in run.events.values() for e in log), key=lambda e: e.version_at_apply
    )
    d = run.p.dim
    delays = np.array([e.delay for e in events], dtype=np.int64)
    inconsistent = scheme == "wicon"
    iterates = [e.x_after for e in events if e.x_after is not None]
    return RunRecord(
        x0=x0,
        iterates=np.array(iterates).reshape(-1, d),
        delays=delays,
        wall_ns=np.array([e.wall_ns for e in events], dtype=np.int64),
        seed=run.wc.seed,
        tau_max=tau_max if tau_max is not None else int(delays.max(initial=0)),
        stride=run.wc.stride,
        scheme=scheme,
        mode="inconsistent" if inconsistent else "consistent",
        config_digest=run.wc.config_digest,
        delays_min=np.array([e.delay_min for e in events], dtype=np.int64)
        if inconsistent
        else None,
        worker_id=np.array([e.worker_id for e in events], dtype=np.int64),
        version_at_read=np.array([e.version_at_read for e in events], dtype=np.int64),
        version_at_apply=np.array([e.version_at_apply for e in events], dtype=np.int64),
        resolved=np.array([e.x_hat for e in events]).reshape(-1, d)
        if run.wc.track_staleness
        else None,
        shadow=run.store.shadow(),
    )


def _prepare(p: Potential, wc: WorkerConfig, x0: Optional[np.ndarray]) -> np.ndarray:
    wc.validate()
    x0 = np.zeros(p.dim) if x0 is None else np.array(x0, dtype=np.float64)
    if x0.shape != (p.dim,):
        raise InvalidInputError(f"x0 must have length {p.dim}, got shape {x0.shape}")
    return x0


def run_sync(
    p: Potential,
    s: StepSchedule,
    noise: NoiseParams,
    wc: WorkerConfig,
    x0: Optional[np.ndarray] = None,
    sync_noise: str = "per_worker",
) -> RunRecord:
    """Synchronous rounds with an updater.

    Per round every worker reads x_k and computes its stochastic gradient g_p and noise z_p.
    The updater then applies x - gamma * sum(g_p) + sqrt(2 sigma gamma) * sum(z_p), summing
    in worker order, so P workers inject P times the noise variance. With
    `sync_noise="per_round"` a single draw from the round stream replaces sum(z_p).
    A wall-clock budget is checked after each round, so the last round always completes.
    """
    x0 = _prepare(p, wc, x0)
    if sync_noise not in SYNC_NOISE_MODES:
        raise InvalidInputError(f"unknown sync noise mode {sync_noise!r}")
    store = SharedParamStore(x0, BARRIER, shadow=wc.shadow)
    run = _Run(p, s, noise, wc, store)
    P = wc.workers
    grads: List[Optional[np.ndarray]] = [None] * P
    noises: List[Optional[np.ndarray]] = [None] * P
    round_rng = aux_stream(wc.seed, "round")
    state = {"x": x0.copy(), "round": 0}

    def update() -> None:
        k = state["round"]
        x = state["x"]
        g_sum = grads[0].copy()
        for g in grads[1:]:
            g_sum += g
        if sync_noise == "per_worker":
            z_sum = noises[0].copy()
            for z in noises[1:]:
                z_sum += z
        else:
            z_sum = round_rng.standard_normal(p.dim)
        x_next = em_update(x, g_sum, s.gamma(k + 1), noise.sigma, z_sum)
        _check_finite(x_next, k + 1)
        with store.write_lock:
            version = store.commit(x_next)
        run.events[0].append(
            _Event(
                worker_id=0,
                version_at_read=k,
                version_at_apply=version,
                wall_ns=run.now(),
                delay=0,
                delay_min=0,
                x_after=x_next if run.keep_iterate(version) else None,
                x_hat=x if wc.track_staleness else None,
            )
        )
        state["x"] = x_next
        state["round"] = k + 1
        if run.expired() or (wc.iterations is not None and state["round"] >= wc.iterations):
            run.stop.set()

    barrier = threading.Barrier(P, action=update)

    def worker(worker_id: int) -> None:
        noise_rng, batch_rng = worker_streams(wc.seed, worker_id)
        try:
            while not run.stop.is_set():
                x = state["x"]
                grads[worker_id] = p.stoch_grad(x, wc.batch, batch_rng)
                noises[worker_id] = noise_rng.standard_normal(p.dim)
                barrier.wait()
        except BaseException:
            barrier.abort()
            raise

    logger.info("starting sync run", extra={"workers": P, "rounds": wc.iterations})
    _start(run, worker, "sync")
    record = _assemble(run, "sync", x0, 0)
    logger.info("sync run finished", extra={"updates": record.n_steps})
    return record


def run_wcon(
    p: Potential,
    s: StepSchedule,
    noise: NoiseParams,
    wc: WorkerConfig,
    tau_cap: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
    read_lock: bool = False,
) -> RunRecord:
    """Consistent reads, delayed gradients.

    Each worker loops snapshot read, stochastic gradient, then a delayed step applied under
    the write lock. A worker whose staleness would exceed `tau_cap` re-reads under the lock
    and recomputes its gradient, so every applied delay is at most `tau_cap`.
    `read_lock=True` takes snapshots under the write lock instead of the sequence counter.
    """
    x0 = _prepare(p, wc, x0)
    if tau_cap is not None and tau_cap < 0:
        raise InvalidInputError(f"tau_cap must be nonnegative, got {tau_cap}")

    store = SharedParamStore(x0, SNAPSHOT, read_lock=read_lock, shadow=wc.shadow)
    run = _Run(p, s, noise, wc, store)
    d = p.dim

    def worker(worker_id: int) -> None:
        noise_rng, batch_rng = worker_streams(wc.seed, worker_id)
        log = run.events[worker_id]
        while run.take_ticket():
            x_hat, read_version = store.read_snapshot()
            g = p.stoch_grad(x_hat, wc.batch, batch_rng)
            z = noise_rng.standard_normal(d)
            with store.write_lock:
                current = store.version
                if tau_cap is not None and current - read_version > tau_cap:
                    x_hat, read_version = store.values(), current
                    g = p.stoch_grad(x_hat, wc.batch, batch_rng)
                x_next = em_update(store.values(), g, s.gamma(current + 1), noise.sigma, z)
                _check_finite(x_next, current + 1)
                version = store.commit(x_next)
            log.append(
                _Event(
                    worker_id=worker_id,
                    version_at_read=read_version,
                    version_at_apply=version,
                    wall_ns=run.now(),
                    delay=version - 1 - read_version,
                    delay_min=version - 1 - read_version,
                    x_after=x_next if run.keep_iterate(version) else None,
                    x_hat=x_hat if wc.track_staleness else None,
                )
            )

    logger.info(
        "starting wcon run",
        extra={"workers": wc.workers, "updates": wc.iterations, "tau_cap": tau_cap},
    )
    _start(run, worker, "wcon")
    record = _assemble(run, "wcon", x0, tau_cap)
    logger.info(
        "wcon run finished",
        extra={"updates": record.n_steps, "max_delay": int(record.delays.max(initial=0))},
    )
    return record


def run_wicon(
    p: Potential,
    s: StepSchedule,
    noise: NoiseParams,
    wc: WorkerConfig,
    x0: Optional[np.ndarray] = None,
) -> RunRecord:
    """Lock-free per-coordinate reads and writes.

    An update claims its id when it starts writing and rewrites each coordinate from its
    current value. A coordinate last written by version v is `id - v` updates stale; the
    record keeps the largest such lag as the delay and the smallest as `delays_min`.
    """
    x0 = _prepare(p, wc, x0)
    store = SharedParamStore(x0, COORDINATE, shadow=wc.shadow)
    run = _Run(p, s, noise, wc, store)
    d = p.dim

    def worker(worker_id: int) -> None:
        noise_rng, batch_rng = worker_streams(wc.seed, worker_id)
        log = run.events[worker_id]
        while run.take_ticket():
            x_hat, read_versions = store.read_coordinates()
            g = p.stoch_grad(x_hat, wc.batch, batch_rng)
            z = noise_rng.standard_normal(d)
            update_id = store.claim()
            version = update_id + 1
            gamma = s.gamma(version)
            for i in range(d):
                value = em_update(store.load(i), float(g[i]), gamma, noise.sigma, float(z[i]))
                if not np.isfinite(value):
                    raise NumericalError(f"coordinate {i} became non-finite at update {version}")
                store.store(i, value, version)
            log.append(
                _Event(
                    worker_id=worker_id,
                    version_at_read=int(read_versions.min()),
                    version_at_apply=version,
                    wall_ns=run.now(),
                    delay=update_id - int(read_versions.min()),
                    delay_min=update_id - int(read_versions.max()),
                    x_after=store.values() if run.keep_iterate(version) else None,
                    x_hat=x_hat if wc.track_staleness else None,
                )
            )

    logger.info("starting wicon run", extra={"workers": wc.workers, "updates": wc.iterations})
    _start(run, worker, "wicon")
    record = _assemble(run, "wicon", x0, None)
    logger.info(
        "wicon run finished",
        extra={"updates": record.n_steps, "max_delay": int(record.delays.max(initial=0))},
    )
    return record


@dataclass(frozen=True)
class StalenessSummary:
    """Delay statistics of a record."""

    mean: float
    max: int
    histogram: Dict[int, int]


def measure_staleness(r: RunRecord) -> StalenessSummary:
    """Mean, maximum and histogram of the delays of every applied update."""
    if r.n_steps == 0:
        raise DataError("record carries no applied updates to measure")
    values, counts = np.unique(r.delays, return_counts=True)
    return StalenessSummary(
        mean=float(np.mean(r.delays)),
        max=int(r.delays.max()),
        histogram={int(v): int(c) for v, c in zip(values, counts)},
    )


def validate_shadow(r: RunRecord) -> bool:
    """Check every read against the store history.

    Whole-vector schemes: the stale vector of each update equals the vector committed at its
    read version. wicon: every coordinate read equals some value written to that coordinate.
    """
    if r.shadow is None or r.resolved is None:
        raise InvalidInputError("record was produced without shadow history")
    if r.mode == "consistent":
        vectors = r.shadow.vectors
        if vectors is None or r.version_at_read is None:
            raise InvalidInputError("shadow history holds no committed vectors")
        for k, (version, x_hat) in enumerate(zip(r.version_at_read, r.resolved)):
            if version >= vectors.shape[0] or not np.array_equal(vectors[version], x_hat):
                logger.info("snapshot of update %d matches no committed vector", k)
                return False
        return True

    per_coordinate = r.shadow.coordinate_values
    if per_coordinate is None:
        raise InvalidInputError("shadow history holds no coordinate writes")
    for i, written in enumerate(per_coordinate):
        if not np.all(np.isin(r.resolved[:, i], written)):
            logger.info("coordinate %d was read with a value never written", i)
            return False
    return True
