# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Potential functions U, their gradients and empirical checks of their constants.

A `Potential` bundles U, its exact gradient, an unbiased stochastic gradient and the
constants the convergence theory is stated in: the strong convexity constant `m`, the
gradient Lipschitz constant `L` and an optional gradient-norm bound `G`.

Three families are provided:
    - quadratic: U(x) = x'Ax/2 - b'x, the canonical strongly convex instance;
    - regression: least squares of a 4th degree polynomial with bias on synthetic data;
    - rica: reconstruction ICA, lambda*||Wx||_1 + ||W'Wx - x||^2/2 averaged over samples.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from async_sgld.errors import DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

VectorFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BatchSpec:
    """Minibatch size for a stochastic gradient; `None` means the full batch."""

    size: Optional[int] = None

    def __post_init__(self):
        if self.size is not None and self.size < 1:
            raise InvalidInputError(f"batch size must be >= 1, got {self.size}")

    def is_full(self, n_rows: int) -> bool:
        """Whether this batch covers a data set of `n_rows` rows."""
        return self.size is None or self.size >= n_rows


FULL_BATCH = BatchSpec()

StochGradFn = Callable[[np.ndarray, BatchSpec, np.random.Generator], np.ndarray]


@dataclass(frozen=True, eq=False)
class Potential:
    """A potential U on R^d together with its curvature constants.

    Attributes:
        name: family name, used in logs and artifact digests.
        dim: dimension d of the parameter vector.
        value: x -> U(x).
        grad: x -> grad U(x).
        stoch_grad: (x, batch, rng) -> unbiased estimate of grad U(x). A full batch
            returns `grad(x)` itself.
        m: strong convexity constant, 0 when unknown or non-convex.
        L: gradient Lipschitz constant (a local estimate for non-quadratic data losses).
        G: gradient norm bound, `None` when not declared.
        hessian_fn: closed-form Hessian when available.
        mode: closed-form minimizer when available.
    """

    name: str
    dim: int
    value: Callable[[np.ndarray], float]
    grad: VectorFn
    stoch_grad: StochGradFn
    m: float
    L: float
    G: Optional[float] = None
    hessian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mode: Optional[np.ndarray] = None


def _check_dim(p: Potential, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.dim,):
        raise DimensionError(
            f"{p.name} potential expects a vector of length {p.dim}, got shape {x.shape}"
        )
    return x


def eval_value(p: Potential, x: np.ndarray) -> float:
    """Return U(x)."""
    return float(p.value(_check_dim(p, x)))


def eval_grad(p: Potential, x: np.ndarray) -> np.ndarray:
    """Return grad U(x)."""
    return p.grad(_check_dim(p, x))


def eval_stoch_grad(
    p: Potential, x: np.ndarray, batch: BatchSpec, rng: np.random.Generator
) -> np.ndarray:
    """Return an unbiased minibatch estimate of grad U(x).

    The full batch reproduces `eval_grad` bit-exactly.
    """
    return p.stoch_grad(_check_dim(p, x), batch, rng)


def hessian(p: Potential, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Hessian of U at x, closed form when known, else central differences of the gradient."""
    x = _check_dim(p, x)
    if p.hessian_fn is not None:
        return np.array(p.hessian_fn(x), dtype=np.float64)

    columns = []
    for i in range(p.dim):
        step = np.zeros(p.dim)
        step[i] = h
        columns.append((p.grad(x + step) - p.grad(x - step)) / (2.0 * h))
    hess = np.column_stack(columns)
    return 0.5 * (hess + hess.T)


# --- quadratic ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadraticSpec:
    """U(x) = x'Ax/2 - b'x with A symmetric positive definite."""

    A: np.ndarray
    b: np.ndarray
    grad_noise_std: float = 0.0


def make_quadratic(spec: QuadraticSpec) -> Potential:
    """Build the quadratic potential; m and L are the extreme eigenvalues of A.

    Minibatch gradients add `grad_noise_std / sqrt(batch.size)` Gaussian noise, so the
    default spec has an exact stochastic gradient.
    """
    A = np.array(spec.A, dtype=np.float64)
    b = np.array(spec.b, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got shape {A.shape}")
    if b.shape != (A.shape[0],):
        raise DimensionError(f"b must have length {A.shape[0]}, got shape {b.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
        raise InvalidInputError("A must be symmetric")
    eigenvalues = scipy.linalg.eigvalsh(A)
    if eigenvalues[0] <= 0.0:
        raise InvalidInputError(
            f"A must be positive definite, smallest eigenvalue {eigenvalues[0]}"
        )
    if spec.grad_noise_std < 0.0:
        raise InvalidInputError("grad_noise_std must be nonnegative")

    noise_std = float(spec.grad_noise_std)

    def value(x: np.ndarray) -> float:
        return float(0.5 * x @ A @ x - b @ x)

    def grad(x: np.ndarray) -> np.ndarray:
        return A @ x - b

    def stoch_grad(x: np.ndarray, batch: BatchSpec, rng: np.random.Generator) -> np.ndarray:
        if batch.size is None or noise_std == 0.0:
            return grad(x)
        return grad(x) + (noise_std / np.sqrt(batch.size)) * rng.standard_normal(x.shape[0])

    return Potential(
        name="quadratic",
        dim=A.shape[0],
        value=value,
        grad=grad,
        stoch_grad=stoch_grad,
        m=float(eigenvalues[0]),
        L=float(eigenvalues[-1]),
        hessian_fn=lambda _x: A,
        mode=np.linalg.solve(A, b),
    )


# --- polynomial regression ----------------------------------------------------------------

REGRESSION_DIM = 5


def regression_features(t: np.ndarray) -> np.ndarray:
    """Feature rows (t, t^2, t^3, t^4, 1); the trailing column carries the bias."""
    t = np.asarray(t, dtype=np.float64)
    return np.column_stack([t, t**2, t**3, t**4, np.ones_like(t)])


@dataclass(frozen=True, eq=False)
class RegressionSpec:
    """Synthetic 4th degree polynomial regression.

    Attributes:
        true_coeffs: 4 feature weights followed by the bias.
        n_samples: rows of the frozen data set.
        data_noise_std: standard deviation of the additive target noise.
        stream: draw fresh feature points for every minibatch instead of subsampling the
            frozen rows.
    """

    true_coeffs: np.ndarray
    n_samples: int
    data_noise_std: float = 0.1
    stream: bool = False


def make_regression(
    spec: RegressionSpec, rng: np.random.Generator
) -> Tuple[Potential, np.ndarray]:
    """Build the least-squares potential on data generated from `spec.true_coeffs`.

    U(theta) = sum_i (phi_i . theta - y_i)^2 / (2n) is a convex quadratic; its m and L are
    the extreme eigenvalues of the empirical design moment matrix, i.e. data dependent.

    Returns:
        The potential and a copy of the generating coefficients.
    """
    coeffs = np.array(spec.true_coeffs, dtype=np.float64)
    if coeffs.shape != (REGRESSION_DIM,):
        raise DimensionError(f"true_coeffs must have length {REGRESSION_DIM}, got {coeffs.shape}")
    if spec.n_samples < 1:
        raise InvalidInputError(f"n_samples must be >= 1, got {spec.n_samples}")
    if spec.data_noise_std < 0.0:
        raise InvalidInputError("data_noise_std must be nonnegative")

    noise_std = float(spec.data_noise_std)
    n = int(spec.n_samples)
    features = regression_features(rng.uniform(-1.0, 1.0, size=n))
    targets = features @ coeffs
    if noise_std > 0.0:
        targets = targets + noise_std * rng.standard_normal(n)
    moment = features.T @ features / n

    def value(theta: np.ndarray) -> float:
        residual = features @ theta - targets
        return float(0.5 * np.mean(residual**2))

    def grad(theta: np.ndarray) -> np.ndarray:
        return features.T @ (features @ theta - targets) / n

    def stoch_grad(
        theta: np.ndarray, batch: BatchSpec, batch_rng: np.random.Generator
    ) -> np.ndarray:
        if batch.is_full(n):
            return grad(theta)
        if spec.stream:
            rows = regression_features(batch_rng.uniform(-1.0, 1.0, size=batch.size))
            ys = rows @ coeffs
            if noise_std > 0.0:
                ys = ys + noise_std * batch_rng.standard_normal(batch.size)
        else:
            idx = batch_rng.integers(0, n, size=batch.size)
            rows, ys = features[idx], targets[idx]
        return rows.T @ (rows @ theta - ys) / batch.size

    eigenvalues = scipy.linalg.eigvalsh(moment)
    logger.debug(
        "regression design spectrum",
        extra={"m_hat": float(eigenvalues[0]), "L_hat": float(eigenvalues[-1]), "rows": n},
    )
    potential = Potential(
        name="regression",
        dim=REGRESSION_DIM,
        value=value,
        grad=grad,
        stoch_grad=stoch_grad,
        m=max(float(eigenvalues[0]), 0.0),
        L=float(eigenvalues[-1]),
        hessian_fn=lambda _theta: moment,
    )
    return potential, coeffs.copy()


# --- reconstruction ICA -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RicaSpec:
    """Reconstruction ICA with a square p x p feature matrix W, flattened to d = p^2.

    Attributes:
        lam: sparsity weight lambda.
        data: n x p matrix whose rows are the input vectors x.
    """

    lam: float
    data: np.ndarray


def make_rica(
    spec: RicaSpec, rng: Optional[np.random.Generator] = None, probe_radius: float = 1.0
) -> Potential:
    """Build the RICA potential.

    The l1 subgradient at 0 is 0 (coordinate-wise sign). The objective is quartic in W, so
    `L` is the largest gradient difference ratio observed within `probe_radius` of the
    origin and `m` is 0.
    """
    data = np.array(spec.data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] == 0:
        raise InvalidInputError(
            f"RICA needs a non-empty n x p data matrix, got shape {data.shape}"
        )
    if spec.lam <= 0.0:
        raise InvalidInputError(f"lambda must be positive, got {spec.lam}")

    lam = float(spec.lam)
    n, p = data.shape

    def _value(w_flat: np.ndarray, xs: np.ndarray) -> float:
        W = w_flat.reshape(p, p)
        hidden = xs @ W.T
        residual = hidden @ W - xs
        per_sample = lam * np.abs(hidden).sum(axis=1) + 0.5 * (residual**2).sum(axis=1)
        return float(per_sample.mean())

    def _grad(w_flat: np.ndarray, xs: np.ndarray) -> np.ndarray:
        W = w_flat.reshape(p, p)
        hidden = xs @ W.T
        residual = hidden @ W - xs
        g = lam * np.sign(hidden).T @ xs + hidden.T @ residual + W @ residual.T @ xs
        return (g / xs.shape[0]).ravel()

    def value(w_flat: np.ndarray) -> float:
        return _value(w_flat, data)

    def grad(w_flat: np.ndarray) -> np.ndarray:
        return _grad(w_flat, data)

    def stoch_grad(
        w_flat: np.ndarray, batch: BatchSpec, batch_rng: np.random.Generator
    ) -> np.ndarray:
        if batch.is_full(n):
            return grad(w_flat)
        return _grad(w_flat, data[batch_rng.integers(0, n, size=batch.size)])

    if rng is None:
        rng = np.random.default_rng(0)
    lipschitz = _lipschitz_ratio(grad, _ball_points(rng, p * p, 32, probe_radius, np.zeros(p * p)))
    return Potential(
        name="rica",
        dim=p * p,
        value=value,
        grad=grad,
        stoch_grad=stoch_grad,
        m=0.0,
        L=max(lipschitz, np.finfo(float).tiny),
    )


# --- assumption verifiers -----------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of `verify_assumptions`.

    Attributes:
        m_ok: strong convexity with the declared m held on every probed triple.
        L_hat: largest observed ||grad U(x) - grad U(y)|| / ||x - y||.
        G_hat: largest observed ||grad U(x)||.
        L_ok: L_hat does not exceed the declared L (1e-9 slack).
        worst_convexity_gap: smallest value of rhs - lhs over the triples (negative on
            violation).
    """

    m_ok: bool
    L_hat: float
    G_hat: float
    L_ok: bool
    worst_convexity_gap: float = field(default=float("inf"))


def _ball_points(
    rng: np.random.Generator, dim: int, count: int, radius: float, center: np.ndarray
) -> np.ndarray:
    directions = rng.standard_normal((count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / dim)
    return center + radii * directions


def _lipschitz_ratio(grad: VectorFn, points: np.ndarray) -> float:
    ratio = 0.0
    for x, y in zip(points[0::2], points[1::2]):
        dist = np.linalg.norm(x - y)
        if dist > 0.0:
            ratio = max(ratio, float(np.linalg.norm(grad(x) - grad(y)) / dist))
    return ratio


def verify_assumptions(
    p: Potential,
    n_probe: int,
    rng: np.random.Generator,
    radius: float = 1.0,
    center: Optional[np.ndarray] = None,
) -> AssumptionReport:
    """Probe the strong convexity and Lipschitz-gradient inequalities empirically.

    Probes are drawn in the ball of `radius` around `center` (default origin):
    `n_probe` random pairs, one pair per coordinate axis, and `n_probe` convexity triples,
    half of them antipodal around the center with t = 1/2.
    """
    if n_probe < 2:
        raise InvalidInputError(f"n_probe must be >= 2, got {n_probe}")
    center = np.zeros(p.dim) if center is None else _check_dim(p, center)

    pairs = _ball_points(rng, p.dim, 2 * n_probe, radius, center)
    axis_pairs: List[np.ndarray] = []
    for i in range(p.dim):
        offset = np.zeros(p.dim)
        offset[i] = radius
        axis_pairs.extend([center, center + offset])
    lipschitz_points = np.vstack([pairs, np.array(axis_pairs)])
    L_hat = _lipschitz_ratio(p.grad, lipschitz_points)

    G_hat = max(float(np.linalg.norm(p.grad(x))) for x in lipschitz_points)

    worst_gap = float("inf")
    half = n_probe // 2
    for k in range(n_probe):
        if k < half:
            v = _ball_points(rng, p.dim, 1, radius, np.zeros(p.dim))[0]
            x, y, t = center + v, center - v, 0.5
        else:
            x, y = _ball_points(rng, p.dim, 2, radius, center)
            t = float(rng.uniform(0.0, 1.0))
        lhs = p.value(t * x + (1.0 - t) * y)
        rhs = (
            t * p.value(x)
            + (1.0 - t) * p.value(y)
            - t * (1.0 - t) * (p.m / 2.0) * float(np.sum((x - y) ** 2))
        )
        worst_gap = min(worst_gap, rhs - lhs + 1e-9 * (1.0 + abs(rhs)))

    report = AssumptionReport(
        m_ok=worst_gap >= 0.0,
        L_hat=L_hat,
        G_hat=G_hat,
        L_ok=L_hat <= p.L + 1e-9,
        worst_convexity_gap=worst_gap,
    )
    logger.info(
        "verified %s potential assumptions",
        p.name,
        extra={"m_ok": report.m_ok, "L_hat": L_hat, "L": p.L, "G_hat": G_hat},
    )
    return report
