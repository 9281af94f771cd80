# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

import itertools
import logging
import math
from typing import Optional

import numpy as np

from async_sgld.langevin import NoiseParams, StepSchedule, em_update, worker_streams
from async_sgld.potentials import FULL_BATCH, BatchSpec, Potential

logger = logging.getLogger(__name__)


def sync_replay(
    p: Potential,
    s: StepSchedule,
    noise: NoiseParams,
    workers: int,
    seed: int,
    rounds: int,
    x0: np.ndarray,
    batch: BatchSpec = FULL_BATCH,
) -> np.ndarray:
    """Single-threaded replay of synchronous rounds.

    Every round draws each worker's gradient and noise in worker order and sums them the
    way the updater does.

    Returns:
        The iterates after every round, shape (rounds, d).
    """
    streams = [worker_streams(seed, w) for w in range(workers)]
    x = np.array(x0, dtype=np.float64)
    out = []
    for k in range(rounds):
        grads, noises = [], []
        for noise_rng, batch_rng in streams:
            grads.append(p.stoch_grad(x, batch, batch_rng))
            noises.append(noise_rng.standard_normal(p.dim))
        g_sum = grads[0].copy()
        for g in grads[1:]:
            g_sum += g
        z_sum = noises[0].copy()
        for z in noises[1:]:
            z_sum += z
        x = em_update(x, g_sum, s.gamma(k + 1), noise.sigma, z_sum)
        out.append(x)
    return np.array(out)


def fd_grad(p: Potential, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of U."""
    g = np.zeros(p.dim)
    for i in range(p.dim):
        e = np.zeros(p.dim)
        e[i] = h
        g[i] = (p.value(x + e) - p.value(x - e)) / (2.0 * h)
    return g


def brute_force_w2(a: np.ndarray, b: np.ndarray) -> float:
    """W2 between equal-size uniform clouds by enumerating every matching."""
    n = a.shape[0]
    best: Optional[float] = None
    for perm in itertools.permutations(range(n)):
        cost = math.fsum(float(np.sum((a[i] - b[j]) ** 2)) for i, j in enumerate(perm))
        best = cost if best is None else min(best, cost)
    assert best is not None
    return math.sqrt(best / n)


def cifar_bytes(labels, pixel: int = 255) -> bytes:
    """CIFAR-10 records with constant pixel values."""
    out = bytearray()
    for label in labels:
        out.append(label)
        out.extend(bytes([pixel]) * 3072)
    return bytes(out)
