# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Step-size and iteration prescriptions of the delayed SGLD convergence theory.

The KL prescription takes gamma_eps = min(gamma^1, ..., gamma^6) / 4 and
n_eps = 2 max(ceil(W2_0^2 / (gamma eps)), tau); the W2 one scales the step by m/8 and the
iteration count becomes logarithmic in W2_0^2 / eps. All formulas are evaluated as printed,
including gamma^4 whose terms do not share units. gamma^3 carries 1/tau and is taken as
+inf without delays.

`theorem_bound_rhs` evaluates the right-hand side of the averaged-measure KL bound. Its
terms in W2^2(mu_0 S^k, pi) and E||grad U(X_k)||^2 are not computable a priori and are
inputs. The gradient-norm assumption is stated on E||grad U||, while the proofs use the
second moment; E||grad U||^2 <= G^2 is the cap applied here. The W2 term of the proposition
behind the bound carries L^2/4 where the lemma before it has L^2/2; the theorem as stated
uses L^2/4.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import pandas as pd

from async_sgld.errors import DimensionError, InvalidInputError
from async_sgld.langevin import StepSchedule, validate_schedule

logger = logging.getLogger(__name__)


def _ceil(x: float) -> int:
    """Ceiling that ignores relative round-off below 1e-9."""
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


@dataclass(frozen=True)
class TheoryParams:
    """Constants of the convergence theory.

    Attributes:
        m: strong convexity constant.
        L: gradient Lipschitz constant.
        d: dimension.
        sigma: diffusion temperature.
        G: gradient bound.
        tau: maximum delay.
        eps: target accuracy.
        W2_0: initial distance W2(mu_0, pi).
    """

    m: float
    L: float
    d: int
    sigma: float
    G: float
    tau: int
    eps: float
    W2_0: float

    def __post_init__(self):
        for name in ("m", "L", "d", "sigma", "G", "eps"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        if self.tau < 0 or int(self.tau) != self.tau:
            raise InvalidInputError(f"tau must be a nonnegative integer, got {self.tau}")
        if self.W2_0 < 0.0:
            raise InvalidInputError(f"W2_0 must be nonnegative, got {self.W2_0}")
        if self.m > self.L:
            raise InvalidInputError(f"m={self.m} exceeds L={self.L}")
        if self.eps >= 1.0:
            logger.warning("eps=%g >= 1 makes the prescriptions vacuous", self.eps)


def _delay_factor(L: float, gamma: float) -> float:
    return L**2 / 4.0 + 2.0 * gamma * L**2 + gamma**2 * (L**2 + L**4)


def gamma_eps_kl(tp: TheoryParams) -> Tuple[float, Tuple[float, ...]]:
    """KL step size and its six components gamma^1..gamma^6."""
    m, L, d, sigma, G, tau, eps = tp.m, tp.L, tp.d, tp.sigma, tp.G, tp.tau, tp.eps
    g1 = eps / (L * d + L**2 * tau**2 * sigma)
    g2 = math.sqrt(eps) / ((L + L**2 + tau**2 * L**2) * G**2)
    g3 = math.inf if tau == 0 else math.sqrt(eps) * m / (L * tau * G)
    g4 = eps ** (2.0 / 3.0) / (
        2.0 * sigma / (1.65 * L + math.sqrt(sigma) * math.sqrt(m))
        + 1.65 * (L / m)
        + tau * L * math.sqrt(sigma) / m
    )
    g5 = L**2 / (L**2 + L**4)
    g6 = 1.0 / 12.0
    components = (g1, g2, g3, g4, g5, g6)
    return min(components) / 4.0, components


def n_eps_kl(tp: TheoryParams, gamma: float) -> int:
    """2 max(ceil(W2_0^2 / (gamma eps)), tau)."""
    if not gamma > 0.0:
        raise InvalidInputError(f"gamma must be positive, got {gamma}")
    return 2 * max(_ceil(tp.W2_0**2 / (gamma * tp.eps)), tp.tau)


def gamma_eps_w2(tp: TheoryParams) -> float:
    """W2 step size m min(gamma^1..gamma^6) / 8."""
    _, components = gamma_eps_kl(tp)
    return tp.m * min(components) / 8.0


def n_eps_w2(tp: TheoryParams, gamma: float) -> int:
    """2 max(ceil(ln(4 W2_0^2 / eps) / (gamma m)), ceil(ln tau)), logs clamped at 0."""
    if not gamma > 0.0:
        raise InvalidInputError(f"gamma must be positive, got {gamma}")
    ratio = 4.0 * tp.W2_0**2 / tp.eps
    transient = _ceil(math.log(ratio) / (gamma * tp.m)) if ratio > 1.0 else 0
    delay = _ceil(math.log(tp.tau)) if tp.tau > 1 else 0
    return 2 * max(transient, delay)


@dataclass(frozen=True)
class BoundBreakdown:
    """Terms of the averaged-measure KL bound, each already divided by Lambda_{N,N+n}."""

    transient: float
    discretization: float
    delay: float
    stationary_gap: float
    gradient: float
    Lambda: float

    @property
    def total(self) -> float:
        """Sum of all terms."""
        return math.fsum(
            (self.transient, self.discretization, self.delay, self.stationary_gap, self.gradient)
        )

    def as_dict(self):
        """Terms and total keyed by name."""
        return {
            "transient": self.transient,
            "discretization": self.discretization,
            "delay": self.delay,
            "stationary_gap": self.stationary_gap,
            "gradient": self.gradient,
            "total": self.total,
        }


def theorem_bound_rhs(
    s: StepSchedule,
    tp: TheoryParams,
    N: int,
    n: int,
    W2_N: float,
    s_dist_seq: Sequence[float],
    grad_sq_seq: Optional[Sequence[float]] = None,
) -> BoundBreakdown:
    """Right-hand side of the KL bound for the averaged measure nu_n^N.

    Sums that start at N + 1 - tau are clamped to k >= 1.

    Args:
        s: the schedule; must pass `validate_schedule` up to N + n.
        tp: theory constants.
        N: burn-in index.
        n: averaging length, >= 1.
        W2_N: W2(mu_0 Q^N, pi).
        s_dist_seq: W2^2(mu_0 S^k, pi) for k = N+1 .. N+n.
        grad_sq_seq: E||grad U(X_k)||^2 for k = max(1, N+1-tau) .. N+n-1, each capped at
            G^2; `None` uses G^2 throughout.

    Raises:
        InvalidInputError: invalid indices or a schedule failing its conditions.
        DimensionError: a sequence does not cover its index range.
    """
    if n < 1 or N < 0:
        raise InvalidInputError(f"need N >= 0 and n >= 1, got N={N}, n={n}")
    if not validate_schedule(s, tp.m, tp.L, N + n):
        raise InvalidInputError(f"schedule {s.name} fails the step-size conditions")
    L, tau, sigma = tp.L, tp.tau, tp.sigma

    main = range(N + 1, N + n + 1)
    delayed_start = max(1, N + 1 - tau)
    Lambda = math.fsum(s.lam(k) for k in main)

    if len(s_dist_seq) != n:
        raise DimensionError(f"s_dist_seq must have {n} entries, got {len(s_dist_seq)}")
    grad_range = range(delayed_start, N + n)
    if grad_sq_seq is None:
        grad_sq = [tp.G**2] * len(grad_range)
    else:
        if len(grad_sq_seq) != len(grad_range):
            raise DimensionError(
                f"grad_sq_seq must have {len(grad_range)} entries, got {len(grad_sq_seq)}"
            )
        grad_sq = [min(float(v), tp.G**2) for v in grad_sq_seq]

    gamma_1 = s.gamma(N + 1)
    transient = s.lam(N + 1) * (1.0 - tp.m * gamma_1) * W2_N**2 / (2.0 * gamma_1 * Lambda)
    discretization = math.fsum(s.gamma(k) * s.lam(k) * L * tp.d for k in main) / Lambda
    delay = (
        math.fsum(
            2.0 * s.gamma(k) * s.lam(k) * tau**2 * sigma * _delay_factor(L, s.gamma(k))
            for k in range(delayed_start, N + n + 1)
        )
        / Lambda
    )
    stationary_gap = math.fsum(float(v) for v in s_dist_seq) / Lambda
    gradient = (
        math.fsum(
            s.gamma(k) ** 2
            * (L / 2.0 + L**2 / 2.0 + tau**2 * _delay_factor(L, s.gamma(k)))
            * g_sq
            for k, g_sq in zip(grad_range, grad_sq)
        )
        / Lambda
    )
    return BoundBreakdown(
        transient=transient,
        discretization=discretization,
        delay=delay,
        stationary_gap=stationary_gap,
        gradient=gradient,
        Lambda=Lambda,
    )


def bias_bound(L: float, tau: float, gamma: float, G: float, sigma: float) -> float:
    """Gradient bias L tau (gamma G + sqrt(gamma sigma)) caused by delays."""
    if min(L, tau, gamma, G, sigma) < 0.0:
        raise InvalidInputError("bias bound arguments must be nonnegative")
    return L * tau * (gamma * G + math.sqrt(gamma * sigma))


def theory_table(tp: TheoryParams) -> pd.DataFrame:
    """Labeled gamma components, gamma_eps and n_eps for the KL and W2 prescriptions."""
    gamma_kl, components = gamma_eps_kl(tp)
    gamma_w2 = gamma_eps_w2(tp)
    rows = []
    for variant, gamma, n_eps, scale in (
        ("kl", gamma_kl, n_eps_kl(tp, gamma_kl), 0.25),
        ("w2", gamma_w2, n_eps_w2(tp, gamma_w2), tp.m / 8.0),
    ):
        for i, component in enumerate(components, start=1):
            rows.append({"variant": variant, "quantity": f"gamma_{i}", "value": component})
        rows.append({"variant": variant, "quantity": "gamma_eps", "value": gamma})
        rows.append({"variant": variant, "quantity": "n_eps", "value": float(n_eps)})
        rows.append({"variant": variant, "quantity": "prefactor", "value": scale})
    return pd.DataFrame(rows, columns=["variant", "quantity", "value"])
