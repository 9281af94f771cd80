# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Convergence diagnostics: exact W2 between clouds, Gaussian W2, histogram KL and the
Laplace reference cloud."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import ot
import scipy.linalg
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from async_sgld.errors import (
    DimensionError,
    GridLeakageError,
    InvalidInputError,
    NumericalError,
)
from async_sgld.potentials import Potential, hessian
from async_sgld.records import RunRecord

logger = logging.getLogger(__name__)

DEFAULT_MAX_LEAKAGE = 0.01


@dataclass(eq=False)
class SampleCloud:
    """Weighted empirical measure; weights default to uniform and are normalized."""

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] == 0:
            raise InvalidInputError(f"a cloud needs at least one point, got shape {points.shape}")
        self.points = points
        self.uniform = self.weights is None
        if self.weights is None:
            self.weights = np.full(points.shape[0], 1.0 / points.shape[0])
            return
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (points.shape[0],):
            raise DimensionError(f"need {points.shape[0]} weights, got shape {weights.shape}")
        if np.any(weights < 0.0) or not weights.sum() > 0.0:
            raise InvalidInputError("weights must be nonnegative with a positive sum")
        self.weights = weights / math.fsum(weights)
        self.uniform = bool(np.all(weights == weights[0]))

    @property
    def n(self) -> int:
        """Number of points."""
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        """Dimension of the points."""
        return int(self.points.shape[1])


@dataclass(eq=False)
class GaussianMeasure:
    """Gaussian N(mean, cov) with a positive semidefinite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise DimensionError(f"covariance must be {d}x{d}, got {self.cov.shape}")
        if not np.allclose(self.cov, self.cov.T, rtol=0.0, atol=1e-10):
            raise InvalidInputError("covariance must be symmetric")
        if scipy.linalg.eigvalsh(self.cov)[0] < -1e-10:
            raise InvalidInputError("covariance must be positive semidefinite")


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = scipy.linalg.eigh(0.5 * (matrix + matrix.T))
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T


def w2_empirical(a: SampleCloud, b: SampleCloud) -> float:
    """Exact Wasserstein-2 distance with squared Euclidean ground cost.

    Equal-size uniform clouds are matched by optimal assignment; anything else goes to the
    network simplex transport solver.
    """
    if a.dim != b.dim:
        raise DimensionError(f"clouds live in different dimensions: {a.dim} vs {b.dim}")
    cost = cdist(a.points, b.points, metric="sqeuclidean")
    if a.n == b.n and a.uniform and b.uniform:
        rows, cols = linear_sum_assignment(cost)
        return math.sqrt(math.fsum(cost[rows, cols]) / a.n)
    return math.sqrt(max(float(ot.emd2(a.weights, b.weights, cost)), 0.0))


def w2_gaussian(g1: GaussianMeasure, g2: GaussianMeasure) -> float:
    """Closed-form W2 between Gaussians."""
    if g1.mean.shape != g2.mean.shape:
        raise DimensionError("Gaussians live in different dimensions")
    root2 = _psd_sqrt(g2.cov)
    cross = _psd_sqrt(root2 @ g1.cov @ root2)
    shift = float(np.sum((g1.mean - g2.mean) ** 2))
    bures = float(np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross))
    return math.sqrt(max(shift + bures, 0.0))


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned histogram grid with `bins[i]` cells on [lower[i], upper[i]]."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    bins: Tuple[int, ...]

    def __post_init__(self):
        if not len(self.lower) == len(self.upper) == len(self.bins) or not self.bins:
            raise DimensionError("grid bounds and bin counts must have one entry per axis")
        for lo, hi, n in zip(self.lower, self.upper, self.bins):
            if n < 1 or not hi > lo:
                raise InvalidInputError(f"axis [{lo}, {hi}] with {n} bins has zero-volume bins")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], bins: int) -> "GridSpec":
        """Same bin count on every axis."""
        return cls(tuple(map(float, lower)), tuple(map(float, upper)), (int(bins),) * len(lower))

    @property
    def dim(self) -> int:
        """Number of axes."""
        return len(self.bins)

    def edges(self) -> List[np.ndarray]:
        """Bin edges per axis."""
        return [np.linspace(lo, hi, n + 1) for lo, hi, n in zip(self.lower, self.upper, self.bins)]

    def centers(self) -> np.ndarray:
        """Cell centers, one row per cell in `np.histogramdd` order."""
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges()]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def discrete_kl(p: np.ndarray, q: np.ndarray) -> float:
    """sum_b p_b ln(p_b / q_b) over the cells with p_b > 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError("distributions must have the same shape")
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        return math.inf
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


def kl_histogram(
    samples: SampleCloud,
    log_u: Callable[[np.ndarray], float],
    grid: GridSpec,
    max_leakage: float = DEFAULT_MAX_LEAKAGE,
) -> float:
    """KL(samples || exp(log_u)) with both sides discretized on `grid`.

    The density is evaluated at cell centers and normalized over the grid.

    Raises:
        GridLeakageError: more than `max_leakage` of the sample weight falls outside the grid.
    """
    if samples.dim != grid.dim:
        raise DimensionError(f"grid has {grid.dim} axes, samples have {samples.dim}")
    counts, _ = np.histogramdd(samples.points, bins=grid.edges(), weights=samples.weights)
    inside = float(counts.sum())
    leakage = 1.0 - inside if inside < 1.0 - 1e-12 else 0.0
    if leakage > max_leakage:
        raise GridLeakageError(leakage, max_leakage)
    if leakage > 0.0:
        logger.warning("%.3f%% of the samples fall outside the KL grid", 100.0 * leakage)
    p = counts.ravel() / inside

    log_density = np.array([log_u(c) for c in grid.centers()], dtype=np.float64)
    q = np.exp(log_density - logsumexp(log_density))
    return discrete_kl(p, q)


def _hessian_factor(p: Potential, x_star: np.ndarray) -> np.ndarray:
    hess = hessian(p, x_star)
    try:
        return scipy.linalg.cholesky(0.5 * (hess + hess.T), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"Hessian of the {p.name} potential is not positive definite at the mode"
        ) from exc


def laplace_gaussian(p: Potential, x_star: np.ndarray, sigma: float) -> GaussianMeasure:
    """N(x_star, sigma * H(x_star)^-1)."""
    if sigma < 0.0:
        raise InvalidInputError(f"sigma must be nonnegative, got {sigma}")
    factor = _hessian_factor(p, x_star)
    inv_factor = scipy.linalg.solve_triangular(factor, np.eye(p.dim), lower=True)
    cov = sigma * inv_factor.T @ inv_factor
    return GaussianMeasure(mean=np.array(x_star, dtype=np.float64), cov=0.5 * (cov + cov.T))


def laplace_reference(
    p: Potential, x_star: np.ndarray, sigma: float, n_samples: int, rng: np.random.Generator
) -> SampleCloud:
    """Draws from the Laplace surrogate N(x_star, sigma * H(x_star)^-1) of the target.

    Exact for quadratic potentials. sigma = 0 gives n copies of x_star.

    Raises:
        NumericalError: the Hessian at x_star is not positive definite.
    """
    if n_samples < 1:
        raise InvalidInputError(f"n_samples must be >= 1, got {n_samples}")
    factor = _hessian_factor(p, x_star)
    x_star = np.asarray(x_star, dtype=np.float64)
    z = rng.standard_normal((n_samples, p.dim))
    if sigma == 0.0:
        return SampleCloud(np.tile(x_star, (n_samples, 1)))
    # x = x* + sqrt(sigma) L^-T z has covariance sigma (L L^T)^-1
    offsets = scipy.linalg.solve_triangular(factor, z.T, lower=True, trans="T").T
    return SampleCloud(x_star + math.sqrt(sigma) * offsets)


def trailing_cloud(r: RunRecord, window: int) -> SampleCloud:
    """The last `window` recorded iterates as a uniform cloud."""
    if window < 1:
        raise InvalidInputError(f"window must be >= 1, got {window}")
    available = r.iterates.shape[0]
    if window > available:
        raise InvalidInputError(f"window {window} exceeds the {available} recorded iterates")
    return SampleCloud(r.iterates[-window:])


def moments(c: SampleCloud) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and unbiased covariance; a single point has zero covariance."""
    mean = c.weights @ c.points
    if c.n == 1:
        return mean, np.zeros((c.dim, c.dim))
    if c.uniform:
        cov = np.cov(c.points, rowvar=False, ddof=1)
    else:
        cov = np.cov(c.points, rowvar=False, aweights=c.weights)
    return mean, np.atleast_2d(cov)


def project(c: SampleCloud, coords: Sequence[int]) -> SampleCloud:
    """Marginal cloud on a subset of coordinates."""
    coords = list(coords)
    if not coords or max(coords) >= c.dim or min(coords) < 0:
        raise DimensionError(f"coordinates {coords} are not a subset of 0..{c.dim - 1}")
    return SampleCloud(c.points[:, coords], None if c.uniform else c.weights)


def milestone_cloud(r: RunRecord, milestone: int, k: int) -> SampleCloud:
    """Recorded iterates taken between `k` steps before and `k` steps after `milestone`."""
    if k < 0:
        raise InvalidInputError(f"k must be nonnegative, got {k}")
    index = r.iter_index
    chosen = (index >= milestone - k) & (index <= milestone + k)
    if not np.any(chosen):
        raise InvalidInputError(f"no recorded iterate within {k} steps of {milestone}")
    return SampleCloud(r.iterates[chosen])


def amari_distance(W: np.ndarray, A: np.ndarray) -> float:
    """Amari index of W A, in [0, 1] and 0 iff W unmixes A up to scaling and permutation."""
    P = np.abs(np.asarray(W, dtype=np.float64) @ np.asarray(A, dtype=np.float64))
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
        raise DimensionError(f"need square matrices of size >= 2, got product shape {P.shape}")
    n = P.shape[0]
    rows = np.sum(P.sum(axis=1) / P.max(axis=1) - 1.0)
    cols = np.sum(P.sum(axis=0) / P.max(axis=0) - 1.0)
    return float((rows + cols) / (2.0 * n * (n - 1)))
