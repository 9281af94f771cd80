# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Langevin update steps, step-size schedules and averaging weights.

The target measure is pi ~ exp(-U/sigma): the diffusion dX = -grad U(X) dt + sqrt(2 sigma) dB
has this stationary law, and sigma = 1 gives exp(-U).
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from async_sgld.errors import DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

Scalar = Union[float, np.ndarray]

# spawn-key prefixes keep worker substreams disjoint from the auxiliary ones
_WORKER_KEY = 0
_AUX_KEY = 1
AUX_STREAMS = {"delay": 0, "reference": 1, "data": 2, "probe": 3, "round": 4}


def em_update(x: Scalar, g: Scalar, gamma: float, sigma: float, z: Scalar) -> Scalar:
    """Unchecked Euler-Maruyama arithmetic, usable on whole vectors or single coordinates.

    Every scheme goes through this expression so that one-worker runs replay the
    simulator bit for bit.
    """
    return x - gamma * g + math.sqrt(2.0 * sigma * gamma) * z


def _check_step(gamma: float, sigma: float) -> None:
    if not gamma > 0.0:
        raise InvalidInputError(f"step size must be positive, got {gamma}")
    if sigma < 0.0:
        raise InvalidInputError(f"sigma must be nonnegative, got {sigma}")


def em_step(x: np.ndarray, g: np.ndarray, gamma: float, sigma: float, z: np.ndarray) -> np.ndarray:
    """One Euler-Maruyama step x - gamma*g + sqrt(2*sigma*gamma)*z.

    Args:
        x: current iterate.
        g: gradient (or stochastic gradient) at x.
        gamma: step size, > 0.
        sigma: diffusion temperature, >= 0.
        z: standard Gaussian draw supplied by the caller.

    Returns:
        The next iterate.

    Raises:
        InvalidInputError: gamma <= 0 or sigma < 0.
        DimensionError: x, g and z differ in shape.
    """
    _check_step(gamma, sigma)
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if g.shape != x.shape or z.shape != x.shape:
        raise DimensionError(
            f"shape mismatch: x {x.shape}, gradient {g.shape}, noise {z.shape}"
        )
    return em_update(x, g, gamma, sigma, z)


def delayed_step(
    x_now: np.ndarray, g_stale: np.ndarray, gamma: float, sigma: float, z: np.ndarray
) -> np.ndarray:
    """Euler-Maruyama step from `x_now` driven by a gradient evaluated at a stale iterate.

    With a fresh gradient this is `em_step` exactly.
    """
    return em_step(x_now, g_stale, gamma, sigma, z)


@dataclass(frozen=True)
class NoiseParams:
    """Diffusion temperature; each step injects sqrt(2*sigma*gamma_k) * N(0, I)."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0.0 or not math.isfinite(self.sigma):
            raise InvalidInputError(f"sigma must be finite and nonnegative, got {self.sigma}")

    def scale(self, gamma: float) -> float:
        """Noise multiplier sqrt(2 sigma gamma)."""
        return math.sqrt(2.0 * self.sigma * gamma)


def _unit(_k: int) -> float:
    return 1.0


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes gamma_k and averaging weights lambda_k, both indexed from k = 1."""

    gamma: Callable[[int], float]
    lam: Callable[[int], float] = _unit
    name: str = "custom"

    @classmethod
    def constant(cls, gamma: float, lam: float = 1.0) -> "StepSchedule":
        """Constant step `gamma` with weights `lam`."""
        if gamma <= 0.0 or lam <= 0.0:
            raise InvalidInputError("constant schedule needs positive gamma and lambda")
        return cls(gamma=lambda _k: gamma, lam=lambda _k: lam, name="constant")

    @classmethod
    def polynomial(cls, gamma0: float, power: float, lam_power: float = 0.0) -> "StepSchedule":
        """gamma_k = gamma0 * k^-power and lambda_k = k^-lam_power."""
        if gamma0 <= 0.0 or power < 0.0 or lam_power < 0.0:
            raise InvalidInputError("polynomial schedule needs gamma0 > 0 and nonnegative powers")
        return cls(
            gamma=lambda k: gamma0 * float(k) ** -power,
            lam=lambda k: float(k) ** -lam_power,
            name=f"polynomial({power:g})",
        )

    @classmethod
    def from_name(cls, name: str, gamma0: float) -> "StepSchedule":
        """Schedules selectable from a config: constant, invsqrt or inverse."""
        if name == "constant":
            return cls.constant(gamma0)
        if name == "invsqrt":
            return cls.polynomial(gamma0, 0.5)
        if name == "inverse":
            return cls.polynomial(gamma0, 1.0)
        raise InvalidInputError(
            f"unknown schedule {name!r}; expected constant, invsqrt or inverse"
        )


def gamma_cap(L: float) -> float:
    """Upper bound 1/(2(L^2 + L^4)) on gamma_1."""
    return 1.0 / (2.0 * (L**2 + L**4))


def validate_schedule(
    s: StepSchedule, m: float, L: float, horizon: int, theory_mode: bool = True
) -> bool:
    """Check a schedule against the hypotheses of the convergence bound up to `horizon`.

    Both sequences must be positive and non-increasing, and
    lambda_{k+1}(1 - m gamma_{k+1}) / gamma_{k+1} <= lambda_k / gamma_k must hold.
    In theory mode gamma_1 must also be below `gamma_cap(L)`.
    """
    if horizon < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {horizon}")

    gamma_prev, lam_prev = s.gamma(1), s.lam(1)
    if gamma_prev <= 0.0 or lam_prev <= 0.0:
        logger.debug("schedule %s is not positive at k=1", s.name)
        return False
    if theory_mode and not gamma_prev < gamma_cap(L):
        logger.debug("schedule %s: gamma_1=%g is not below %g", s.name, gamma_prev, gamma_cap(L))
        return False

    for k in range(2, horizon + 1):
        gamma_k, lam_k = s.gamma(k), s.lam(k)
        if gamma_k <= 0.0 or lam_k <= 0.0:
            logger.debug("schedule %s is not positive at k=%d", s.name, k)
            return False
        if gamma_k > gamma_prev or lam_k > lam_prev:
            logger.debug("schedule %s increases at k=%d", s.name, k)
            return False
        lhs = lam_k * (1.0 - m * gamma_k) / gamma_k
        rhs = lam_prev / gamma_prev
        if lhs > rhs * (1.0 + 1e-12):
            logger.debug("schedule %s breaks the lambda/gamma chain at k=%d", s.name, k)
            return False
        gamma_prev, lam_prev = gamma_k, lam_k
    return True


def averaged_weights(s: StepSchedule, N: int, n: int) -> np.ndarray:
    """Weights (lambda_{N+1}, ..., lambda_{N+n}) / Lambda_{N,N+n} of the averaged measure."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if N < 0:
        raise InvalidInputError(f"N must be >= 0, got {N}")
    lams = np.array([s.lam(k) for k in range(N + 1, N + n + 1)], dtype=np.float64)
    if np.any(lams <= 0.0):
        raise InvalidInputError("lambda weights must be positive")
    return lams / math.fsum(lams)


def _seed_entropy(seed: int) -> int:
    if seed < 0:
        raise InvalidInputError(f"seed must be a nonnegative integer, got {seed}")
    return int(seed)


def worker_streams(seed: int, worker_id: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Disjoint (noise, batch) generators of one worker, derived from the master seed."""
    sequence = np.random.SeedSequence(_seed_entropy(seed), spawn_key=(_WORKER_KEY, worker_id))
    noise_seq, batch_seq = sequence.spawn(2)
    return np.random.default_rng(noise_seq), np.random.default_rng(batch_seq)


def aux_stream(seed: int, name: str) -> np.random.Generator:
    """Named generator (delay, reference, data, ...) disjoint from every worker stream."""
    try:
        key = AUX_STREAMS[name]
    except KeyError:
        raise InvalidInputError(f"unknown auxiliary stream {name!r}") from None
    return np.random.default_rng(
        np.random.SeedSequence(_seed_entropy(seed), spawn_key=(_AUX_KEY, key))
    )
