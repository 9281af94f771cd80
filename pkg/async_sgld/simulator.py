# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Deterministic single-threaded simulator of delayed-gradient SGLD.

Step k (0-based) resolves a stale vector x_hat_k from the last tau + 1 iterates, evaluates the
stochastic gradient there and moves x_k to x_{k+1} with step size gamma_{k+1}. Delays larger
than the available history are clipped, i.e. x_hat_k = x_{max(0, k - tau_k)}.

Noise comes from worker 0's noise stream and minibatches from worker 0's batch stream, so a
run is a pure function of its seed and a one-worker executor replays it exactly. Delays come
from a separate stream, which keeps the noise sequence independent of the delay model.
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from async_sgld.errors import DimensionError, InvalidInputError, NumericalError
from async_sgld.langevin import (
    NoiseParams,
    StepSchedule,
    aux_stream,
    delayed_step,
    validate_schedule,
    worker_streams,
)
from async_sgld.potentials import FULL_BATCH, BatchSpec, Potential
from async_sgld.records import RunRecord

logger = logging.getLogger(__name__)

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
DELAY_LAWS = ("fixed", "uniform", "recorded")


@dataclass(frozen=True, eq=False)
class DelayModel:
    """Read discipline and staleness law, every delay bounded by `tau_max`.

    Attributes:
        mode: consistent (x_hat is one past iterate) or inconsistent (coordinate i comes
            from iterate k - s_i).
        tau_max: the delay bound tau.
        law: fixed, uniform over 0..tau_max, or recorded.
        tau0: the fixed delay; defaults to tau_max.
        sequence: recorded delays, one per step, or one row of d offsets per step in
            inconsistent mode.
    """

    mode: str = CONSISTENT
    tau_max: int = 0
    law: str = "fixed"
    tau0: Optional[int] = None
    sequence: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in (CONSISTENT, INCONSISTENT):
            raise InvalidInputError(f"unknown read mode {self.mode!r}")
        if self.law not in DELAY_LAWS:
            raise InvalidInputError(f"unknown delay law {self.law!r}")
        if self.tau_max < 0:
            raise InvalidInputError(f"tau must be nonnegative, got {self.tau_max}")
        if self.tau0 is not None and not 0 <= self.tau0 <= self.tau_max:
            raise InvalidInputError(f"fixed delay {self.tau0} outside [0, {self.tau_max}]")
        if self.law == "recorded":
            if self.sequence is None:
                raise InvalidInputError("the recorded law needs a delay sequence")
            seq = np.asarray(self.sequence, dtype=np.int64)
            if seq.size and (seq.min() < 0 or seq.max() > self.tau_max):
                raise InvalidInputError(f"recorded delays must lie in [0, {self.tau_max}]")
            object.__setattr__(self, "sequence", seq)

    @classmethod
    def fixed(cls, tau: int, mode: str = CONSISTENT) -> "DelayModel":
        """Every step reads exactly `tau` steps back."""
        return cls(mode=mode, tau_max=tau, law="fixed", tau0=tau)

    @classmethod
    def uniform(cls, tau: int, mode: str = CONSISTENT) -> "DelayModel":
        """Delays drawn uniformly from 0..tau."""
        return cls(mode=mode, tau_max=tau, law="uniform")

    @classmethod
    def recorded(
        cls, sequence: Sequence, tau_max: Optional[int] = None, mode: str = CONSISTENT
    ) -> "DelayModel":
        """Replay a measured delay sequence."""
        seq = np.asarray(sequence, dtype=np.int64)
        bound = int(seq.max()) if tau_max is None and seq.size else int(tau_max or 0)
        return cls(mode=mode, tau_max=bound, law="recorded", sequence=seq)

    def draw(self, k: int, dim: int, rng: np.random.Generator) -> Union[int, np.ndarray]:
        """Raw delay of step k: an int, or d offsets in inconsistent mode."""
        inconsistent = self.mode == INCONSISTENT
        if self.law == "fixed":
            return self.tau_max if self.tau0 is None else self.tau0
        if self.law == "uniform":
            if inconsistent:
                return rng.integers(0, self.tau_max + 1, size=dim)
            return int(rng.integers(0, self.tau_max + 1))
        assert self.sequence is not None
        if k >= self.sequence.shape[0]:
            raise InvalidInputError(f"recorded delay sequence ends before step {k}")
        row = self.sequence[k]
        if np.ndim(row) == 0:
            return int(row)
        if not inconsistent:
            raise InvalidInputError("per-coordinate recorded delays need inconsistent mode")
        if row.shape != (dim,):
            raise DimensionError(f"recorded delay row {k} must have length {dim}")
        return row


class DelayedSimulator:
    """Resumable simulator; `simulate` is the one-shot form.

    The harness drives it with `advance` and inspects `tail` to stop on a plateau.
    """

    def __init__(
        self,
        p: Potential,
        s: StepSchedule,
        noise: NoiseParams,
        dm: DelayModel,
        x0: np.ndarray,
        seed: int,
        batch: BatchSpec = FULL_BATCH,
        stride: int = 1,
        track_staleness: bool = False,
        wall_clock: bool = True,
        config_digest: str = "",
    ):
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (p.dim,):
            raise DimensionError(f"x0 must have length {p.dim}, got shape {x0.shape}")
        if stride < 1:
            raise InvalidInputError(f"stride must be >= 1, got {stride}")
        if track_staleness and stride != 1:
            raise InvalidInputError("staleness tracking needs stride 1")

        self.potential = p
        self.schedule = s
        self.noise = noise
        self.delay_model = dm
        self.batch = batch
        self.seed = seed
        self.stride = stride
        self.track_staleness = track_staleness
        self.wall_clock = wall_clock
        self.config_digest = config_digest

        self._x0 = x0.copy()
        self._depth = dm.tau_max + 1
        self._ring = np.empty((self._depth, p.dim))
        self._ring[0] = x0
        self._coords = np.arange(p.dim)
        self._k = 0

        self._noise_rng, self._batch_rng = worker_streams(seed, 0)
        self._delay_rng = aux_stream(seed, "delay")

        self._delays: List[int] = []
        self._delays_min: List[int] = []
        self._wall_ns: List[int] = []
        self._iterates: List[np.ndarray] = []
        self._resolved: List[np.ndarray] = []
        self._t0 = time.monotonic_ns()

    @property
    def steps(self) -> int:
        """Steps taken so far."""
        return self._k

    @property
    def current(self) -> np.ndarray:
        """Latest iterate."""
        return self._ring[self._k % self._depth].copy()

    @property
    def elapsed_ns(self) -> int:
        """wall_ns of the last step, 0 before the first."""
        return self._wall_ns[-1] if self._wall_ns else 0

    def delays_since(self, step: int) -> np.ndarray:
        """Delays of the steps after the first `step`."""
        return np.array(self._delays[step:], dtype=np.int64)

    def _next_noise(self) -> np.ndarray:
        return self._noise_rng.standard_normal(self.potential.dim)

    def _resolve(self, k: int) -> Tuple[np.ndarray, int, int]:
        raw = self.delay_model.draw(k, self.potential.dim, self._delay_rng)
        if np.ndim(raw) == 0:
            delay = min(int(raw), k)
            return self._ring[(k - delay) % self._depth].copy(), delay, delay
        offsets = np.minimum(raw, k)
        x_hat = self._ring[(k - offsets) % self._depth, self._coords]
        return x_hat, int(offsets.max()), int(offsets.min())

    def advance(self, n_steps: int) -> None:
        """Run `n_steps` more steps."""
        p = self.potential
        for _ in range(n_steps):
            k = self._k
            x_now = self._ring[k % self._depth]
            x_hat, delay, delay_min = self._resolve(k)
            g = p.stoch_grad(x_hat, self.batch, self._batch_rng)
            gamma = self.schedule.gamma(k + 1)
            x_next = delayed_step(x_now, g, gamma, self.noise.sigma, self._next_noise())
            if not np.all(np.isfinite(x_next)):
                raise NumericalError(f"iterate became non-finite at step {k}")

            self._ring[(k + 1) % self._depth] = x_next
            self._delays.append(delay)
            self._delays_min.append(delay_min)
            self._wall_ns.append(time.monotonic_ns() - self._t0 if self.wall_clock else 0)
            if (k + 1) % self.stride == 0:
                self._iterates.append(x_next)
            if self.track_staleness:
                self._resolved.append(x_hat)
            self._k = k + 1
        logger.debug("simulator at step %d", self._k)

    def tail(self, window: int) -> np.ndarray:
        """The last `window` recorded iterates (fewer if not yet available)."""
        if window < 1:
            raise InvalidInputError(f"window must be >= 1, got {window}")
        if not self._iterates:
            return np.empty((0, self.potential.dim))
        return np.array(self._iterates[-window:])

    def record(self) -> RunRecord:
        """Snapshot of the run so far."""
        inconsistent = self.delay_model.mode == INCONSISTENT
        return RunRecord(
            x0=self._x0,
            iterates=np.array(self._iterates).reshape(-1, self.potential.dim),
            delays=np.array(self._delays, dtype=np.int64),
            wall_ns=np.array(self._wall_ns, dtype=np.int64),
            seed=self.seed,
            tau_max=self.delay_model.tau_max,
            stride=self.stride,
            scheme="sim",
            mode=self.delay_model.mode,
            config_digest=self.config_digest,
            delays_min=np.array(self._delays_min, dtype=np.int64) if inconsistent else None,
            resolved=np.array(self._resolved).reshape(-1, self.potential.dim)
            if self.track_staleness
            else None,
        )


def simulate(
    p: Potential,
    s: StepSchedule,
    noise: NoiseParams,
    dm: DelayModel,
    n_iters: int,
    x0: np.ndarray,
    seed: int,
    batch: BatchSpec = FULL_BATCH,
    stride: int = 1,
    track_staleness: bool = False,
    theory_mode: bool = False,
    wall_clock: bool = True,
    config_digest: str = "",
) -> RunRecord:
    """Run `n_iters` delayed SGLD steps from `x0`.

    Identical seeds and delay models give bit-identical records (up to `wall_ns` when
    `wall_clock` is on).

    Raises:
        InvalidInputError: n_iters < 1, or theory mode is on and the schedule fails
            `validate_schedule`.
        DimensionError: x0 does not match the potential.
        NumericalError: an iterate overflows.
    """
    if n_iters < 1:
        raise InvalidInputError(f"n_iters must be >= 1, got {n_iters}")
    if theory_mode and not validate_schedule(s, p.m, p.L, n_iters):
        raise InvalidInputError(f"schedule {s.name} fails the step-size conditions in theory mode")
    sim = DelayedSimulator(
        p,
        s,
        noise,
        dm,
        x0,
        seed,
        batch=batch,
        stride=stride,
        track_staleness=track_staleness,
        wall_clock=wall_clock,
        config_digest=config_digest,
    )
    logger.info(
        "simulating %d steps",
        n_iters,
        extra={"potential": p.name, "tau": dm.tau_max, "law": dm.law, "mode": dm.mode},
    )
    sim.advance(n_iters)
    return sim.record()


def delay_histogram(r: RunRecord, skip: int = 0) -> Dict[int, int]:
    """Counts of each observed delay value, ignoring the first `skip` steps."""
    delays = r.delays[skip:]
    if delays.size == 0:
        raise InvalidInputError("cannot build a delay histogram of an empty record")
    values, counts = np.unique(delays, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def check_delay_assumption(r: RunRecord, dm: DelayModel) -> bool:
    """Whether every stale vector came from the last tau_max + 1 iterates.

    In consistent mode x_hat_k must equal one of x_{k-tau}, ..., x_k; in inconsistent mode
    each coordinate must match that coordinate of one of them. Records without staleness
    tracking cannot be checked.
    """
    if r.resolved is None:
        raise InvalidInputError("record was produced without staleness tracking")
    if r.delays.size and (r.delays.min() < 0 or r.delays.max() > dm.tau_max):
        logger.info("delay outside [0, %d] in record", dm.tau_max)
        return False

    history = r.full_history()
    for k, x_hat in enumerate(r.resolved):
        window = history[max(0, k - dm.tau_max) : k + 1]
        matches = window == x_hat
        if dm.mode == CONSISTENT:
            ok = bool(matches.all(axis=1).any())
        else:
            ok = bool(matches.any(axis=0).all())
        if not ok:
            logger.info("stale vector of step %d is not drawn from its window", k)
            return False
    return True
