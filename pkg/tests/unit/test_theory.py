# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

import logging
import math

import pytest

from async_sgld.errors import DimensionError, InvalidInputError
from async_sgld.langevin import StepSchedule
from async_sgld.theory import (
    TheoryParams,
    bias_bound,
    gamma_eps_kl,
    gamma_eps_w2,
    n_eps_kl,
    n_eps_w2,
    theorem_bound_rhs,
    theory_table,
)

logger = logging.getLogger(__name__)


def params(**overrides) -> TheoryParams:
    values = dict(m=1.0, L=1.0, d=4, sigma=0.5, G=2.0, tau=2, eps=0.05, W2_0=1.0)
    values.update(overrides)
    return TheoryParams(**values)


def test_last_component_is_a_twelfth():
    _, components = gamma_eps_kl(params())
    assert components[5] == 1.0 / 12.0


def test_first_component_on_random_parameters(rng):
    for _ in range(20):
        m = float(rng.uniform(0.1, 1.0))
        tp = params(
            m=m,
            L=m + float(rng.uniform(0.0, 5.0)),
            d=int(rng.integers(1, 50)),
            sigma=float(rng.uniform(0.01, 2.0)),
            tau=int(rng.integers(0, 20)),
            eps=float(rng.uniform(0.001, 0.5)),
        )
        expected = tp.eps / (tp.L * tp.d + tp.L * tp.L * tp.tau * tp.tau * tp.sigma)
        assert gamma_eps_kl(tp)[1][0] == pytest.approx(expected, rel=0.0, abs=1e-12)


def test_gamma_eps_is_a_quarter_of_the_smallest_component():
    gamma, components = gamma_eps_kl(params())
    assert gamma == min(components) / 4.0
    assert gamma_eps_w2(params()) == pytest.approx(params().m * min(components) / 8.0)


def test_delay_component_is_unbounded_without_delays():
    _, components = gamma_eps_kl(params(tau=0))
    assert components[2] == math.inf


def test_iteration_counts():
    tp = params(W2_0=2.0, eps=0.1, tau=3)
    # W2_0^2 / (gamma eps) = 80
    assert n_eps_kl(tp, 0.5) == 160
    # ln(4 W2_0^2 / eps) / (gamma m) = ln(160) / 0.5 = 10.15
    assert n_eps_w2(tp, 0.5) == 22
    assert n_eps_w2(params(W2_0=0.0, tau=0), 0.5) == 0
    with pytest.raises(InvalidInputError):
        n_eps_kl(tp, 0.0)


def test_ceil_ignores_round_off():
    # W2_0^2 / (gamma eps) = 0.3^2 / (0.1 * 0.09) is 10 up to round-off
    assert n_eps_kl(params(W2_0=0.3, eps=0.09, tau=0), 0.1) == 20


@pytest.mark.parametrize(
    "name, values",
    [
        ("tau", [0, 1, 2, 4, 8, 16]),
        ("L", [1.0, 1.5, 2.0, 4.0]),
        ("d", [1, 2, 4, 8, 16]),
        ("sigma", [0.1, 0.5, 1.0, 2.0]),
        ("G", [0.5, 1.0, 2.0, 4.0]),
    ],
)
def test_step_size_shrinks_as_the_problem_hardens(name, values):
    gammas = [gamma_eps_kl(params(**{name: v}))[0] for v in values]
    assert all(later <= earlier for earlier, later in zip(gammas, gammas[1:]))


def test_step_size_grows_and_iterations_fall_with_eps():
    eps_values = [0.01, 0.05, 0.1, 0.5]
    gammas = [gamma_eps_kl(params(eps=eps))[0] for eps in eps_values]
    assert all(later >= earlier for earlier, later in zip(gammas, gammas[1:]))
    fixed = [n_eps_kl(params(eps=eps), 0.01) for eps in eps_values]
    assert all(later <= earlier for earlier, later in zip(fixed, fixed[1:]))
    prescribed = [n_eps_kl(params(eps=eps), g) for eps, g in zip(eps_values, gammas)]
    assert all(later <= earlier for earlier, later in zip(prescribed, prescribed[1:]))


def test_bias_bound():
    assert bias_bound(1.0, 2.0, 0.01, 10.0, 1.0) == pytest.approx(0.4)
    with pytest.raises(InvalidInputError):
        bias_bound(1.0, -1.0, 0.01, 1.0, 1.0)


def test_delay_term_vanishes_without_delays_and_scales_with_tau_squared():
    s = StepSchedule.constant(0.01)
    n = 50
    dists = [0.1] * n

    def delay(tau: int) -> float:
        tp = params(tau=tau)
        grads = [1.0] * (n - 1)
        return theorem_bound_rhs(s, tp, 0, n, 1.0, dists, grads).delay

    assert delay(0) == 0.0
    assert delay(4) == pytest.approx(4.0 * delay(2), rel=1e-12)


def test_bound_terms_are_normalized_by_lambda():
    s = StepSchedule.constant(0.01)
    tp = params(tau=0)
    bound = theorem_bound_rhs(s, tp, 5, 10, 2.0, [0.5] * 10)
    assert bound.Lambda == pytest.approx(10.0)
    assert bound.stationary_gap == pytest.approx(0.5)
    assert bound.discretization == pytest.approx(0.01 * tp.L * tp.d)
    assert bound.transient == pytest.approx((1.0 - 0.01) * 4.0 / (2.0 * 0.01 * 10.0))
    assert bound.total == pytest.approx(sum(v for k, v in bound.as_dict().items() if k != "total"))


def test_gradient_moments_are_capped():
    s = StepSchedule.constant(0.01)
    tp = params(tau=1)
    capped = theorem_bound_rhs(s, tp, 3, 4, 1.0, [0.0] * 4, [100.0] * 4)
    default = theorem_bound_rhs(s, tp, 3, 4, 1.0, [0.0] * 4)
    assert capped.gradient == pytest.approx(default.gradient)


def test_bound_input_validation():
    s = StepSchedule.constant(0.01)
    with pytest.raises(DimensionError):
        theorem_bound_rhs(s, params(), 0, 5, 1.0, [0.0] * 4)
    with pytest.raises(DimensionError):
        theorem_bound_rhs(s, params(tau=0), 0, 5, 1.0, [0.0] * 5, [1.0] * 5)
    with pytest.raises(InvalidInputError):
        theorem_bound_rhs(s, params(), 0, 0, 1.0, [])
    with pytest.raises(InvalidInputError):
        theorem_bound_rhs(StepSchedule.constant(1.0), params(), 0, 5, 1.0, [0.0] * 5)


@pytest.mark.parametrize(
    "overrides", [{"m": 0.0}, {"sigma": -1.0}, {"tau": -1}, {"W2_0": -1.0}, {"m": 2.0}]
)
def test_params_validation(overrides):
    with pytest.raises(InvalidInputError):
        params(**overrides)


def test_theory_table_rows():
    table = theory_table(params())
    assert list(table.columns) == ["variant", "quantity", "value"]
    assert len(table) == 18
    kl = table[table["variant"] == "kl"].set_index("quantity")["value"]
    assert kl["gamma_6"] == 1.0 / 12.0
    assert kl["n_eps"] == n_eps_kl(params(), kl["gamma_eps"])
