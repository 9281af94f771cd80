# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

import logging
import math

import numpy as np
import pytest

from async_sgld.errors import InvalidInputError, NumericalError
from async_sgld.langevin import NoiseParams, StepSchedule
from async_sgld.potentials import QuadraticSpec, make_quadratic
from async_sgld.simulator import (
    INCONSISTENT,
    DelayedSimulator,
    DelayModel,
    check_delay_assumption,
    delay_histogram,
    simulate,
)

logger = logging.getLogger(__name__)


@pytest.fixture
def scalar():
    return make_quadratic(QuadraticSpec(A=np.eye(1), b=np.zeros(1)))


def test_fixed_delay_worked_example(scalar):
    r = simulate(
        scalar,
        StepSchedule.constant(0.1),
        NoiseParams(0.0),
        DelayModel.fixed(1),
        3,
        np.array([1.0]),
        seed=0,
    )
    np.testing.assert_allclose(r.iterates[:, 0], [0.9, 0.8, 0.71])
    assert list(r.delays) == [0, 1, 1]


def test_delays_are_clipped_to_the_history(quadratic):
    r = simulate(
        quadratic,
        StepSchedule.constant(0.01),
        NoiseParams(1.0),
        DelayModel.fixed(3),
        10,
        np.zeros(2),
        seed=1,
    )
    assert delay_histogram(r) == {0: 1, 1: 1, 2: 1, 3: 7}
    assert delay_histogram(r, skip=3) == {3: 7}


def test_noiseless_undelayed_run_reaches_the_mode(quadratic):
    r = simulate(
        quadratic,
        StepSchedule.constant(0.1),
        NoiseParams(0.0),
        DelayModel(),
        2000,
        np.zeros(2),
        seed=0,
    )
    assert np.linalg.norm(r.final() - quadratic.mode) <= 1e-6


def test_same_seed_gives_identical_records(quadratic):
    def run():
        return simulate(
            quadratic,
            StepSchedule.constant(0.01),
            NoiseParams(1.0),
            DelayModel.uniform(4),
            500,
            np.zeros(2),
            seed=3,
            wall_clock=False,
        )

    first, second = run(), run()
    assert first.identical(second)
    assert np.all(first.wall_ns == 0)


def test_different_seeds_differ(quadratic):
    kwargs = dict(x0=np.zeros(2), n_iters=50, dm=DelayModel(), noise=NoiseParams(1.0))
    a = simulate(quadratic, StepSchedule.constant(0.01), seed=1, **kwargs)
    b = simulate(quadratic, StepSchedule.constant(0.01), seed=2, **kwargs)
    assert not a.identical(b)


def test_advance_in_chunks_matches_one_shot(quadratic):
    args = (quadratic, StepSchedule.constant(0.01), NoiseParams(1.0), DelayModel.uniform(2))
    one_shot = simulate(*args, 300, np.zeros(2), seed=9, wall_clock=False)
    sim = DelayedSimulator(*args, np.zeros(2), seed=9, wall_clock=False)
    for _ in range(3):
        sim.advance(100)
    assert sim.record().identical(one_shot)
    assert sim.steps == 300
    np.testing.assert_array_equal(sim.current, one_shot.final())
    np.testing.assert_array_equal(sim.tail(5), one_shot.iterates[-5:])
    np.testing.assert_array_equal(sim.delays_since(250), one_shot.delays[250:])
    assert sim.elapsed_ns == 0


def test_stride_keeps_every_kth_iterate(quadratic):
    args = (quadratic, StepSchedule.constant(0.01), NoiseParams(1.0), DelayModel())
    full = simulate(*args, 100, np.zeros(2), seed=4)
    strided = simulate(*args, 100, np.zeros(2), seed=4, stride=10)
    np.testing.assert_array_equal(strided.iterates, full.iterates[9::10])


@pytest.mark.parametrize("mode", ["consistent", INCONSISTENT])
def test_stale_vectors_come_from_the_window(quadratic4, mode):
    dm = DelayModel.uniform(5, mode)
    r = simulate(
        quadratic4,
        StepSchedule.constant(0.05),
        NoiseParams(0.5),
        dm,
        400,
        np.ones(4),
        seed=2,
        track_staleness=True,
    )
    assert check_delay_assumption(r, dm)
    if mode == INCONSISTENT:
        assert r.delays_min is not None
        assert np.all(r.delays_min <= r.delays)


def test_a_too_tight_bound_is_detected(quadratic4):
    r = simulate(
        quadratic4,
        StepSchedule.constant(0.05),
        NoiseParams(0.5),
        DelayModel.fixed(4),
        50,
        np.ones(4),
        seed=2,
        track_staleness=True,
    )
    assert not check_delay_assumption(r, DelayModel.fixed(2))


def test_assumption_check_needs_tracking(quadratic):
    r = simulate(
        quadratic, StepSchedule.constant(0.01), NoiseParams(1.0), DelayModel(), 5, np.zeros(2), 0
    )
    with pytest.raises(InvalidInputError):
        check_delay_assumption(r, DelayModel())


def test_recorded_delays_are_replayed(quadratic):
    sequence = [0, 1, 0, 2, 2, 1]
    r = simulate(
        quadratic,
        StepSchedule.constant(0.01),
        NoiseParams(1.0),
        DelayModel.recorded(sequence),
        6,
        np.zeros(2),
        seed=0,
    )
    assert list(r.delays) == sequence
    with pytest.raises(InvalidInputError):
        simulate(
            quadratic,
            StepSchedule.constant(0.01),
            NoiseParams(1.0),
            DelayModel.recorded(sequence),
            7,
            np.zeros(2),
            seed=0,
        )


def test_delay_model_validation():
    with pytest.raises(InvalidInputError):
        DelayModel(mode="sometimes")
    with pytest.raises(InvalidInputError):
        DelayModel(tau_max=-1)
    with pytest.raises(InvalidInputError):
        DelayModel(tau_max=2, tau0=3)


def test_divergence_is_reported(quadratic):
    with pytest.raises(NumericalError):
        simulate(
            quadratic,
            StepSchedule.constant(1.0),
            NoiseParams(0.0),
            DelayModel(),
            5000,
            np.zeros(2),
            seed=0,
        )


def test_theory_mode_rejects_large_steps(quadratic):
    with pytest.raises(InvalidInputError):
        simulate(
            quadratic,
            StepSchedule.constant(0.1),
            NoiseParams(1.0),
            DelayModel(),
            10,
            np.zeros(2),
            seed=0,
            theory_mode=True,
        )


def test_empty_histogram_is_an_error(quadratic):
    r = simulate(
        quadratic, StepSchedule.constant(0.01), NoiseParams(1.0), DelayModel(), 3, np.zeros(2), 0
    )
    with pytest.raises(InvalidInputError):
        delay_histogram(r, skip=3)


def test_uniform_delays_fill_every_bin_evenly(quadratic):
    n = 20000
    r = simulate(
        quadratic,
        StepSchedule.constant(0.01),
        NoiseParams(1.0),
        DelayModel.uniform(4),
        n + 4,
        np.zeros(2),
        seed=5,
    )
    hist = delay_histogram(r, skip=4)
    assert set(hist) <= set(range(5))
    sd = math.sqrt(0.2 * 0.8 / n)
    for value in range(5):
        assert abs(hist.get(value, 0) / n - 0.2) <= 3.0 * sd


def test_mixed_coordinate_reads_break_the_consistent_rule(quadratic):
    # step 1 reads coordinate 0 from x_0 and coordinate 1 from x_1
    dm = DelayModel.recorded([[0, 0], [1, 0], [1, 0]], mode=INCONSISTENT)
    r = simulate(
        quadratic,
        StepSchedule.constant(0.01),
        NoiseParams(1.0),
        dm,
        3,
        np.zeros(2),
        seed=0,
        track_staleness=True,
    )
    assert list(r.delays) == [0, 1, 1]
    assert list(r.delays_min) == [0, 0, 0]
    assert check_delay_assumption(r, dm)
    assert not check_delay_assumption(r, DelayModel.recorded([0, 1, 1]))


def _noise_draws(p, dm):
    gamma, sigma = 0.01, 0.5
    r = simulate(
        p,
        StepSchedule.constant(gamma),
        NoiseParams(sigma),
        dm,
        200,
        np.ones(2),
        seed=7,
        track_staleness=True,
    )
    history = r.full_history()
    grads = np.array([p.grad(x_hat) for x_hat in r.resolved])
    return (history[1:] - history[:-1] + gamma * grads) / math.sqrt(2.0 * sigma * gamma)


def test_noise_does_not_depend_on_the_delay_model(quadratic):
    undelayed = _noise_draws(quadratic, DelayModel())
    for dm in (DelayModel.fixed(3), DelayModel.uniform(3)):
        np.testing.assert_allclose(_noise_draws(quadratic, dm), undelayed, rtol=0.0, atol=1e-9)


@pytest.mark.parametrize("tau", [0, 3, 6])
def test_noiseless_delayed_runs_contract_geometrically(quadratic, tau):
    gamma = 0.01
    assert tau <= math.floor(1.0 / (4.0 * gamma * quadratic.L))
    r = simulate(
        quadratic,
        StepSchedule.constant(gamma),
        NoiseParams(0.0),
        DelayModel.fixed(tau),
        2000,
        np.zeros(2),
        seed=0,
    )
    errors = np.linalg.norm(r.full_history() - quadratic.mode, axis=1)
    assert errors.max() <= 2.0 * errors[0]
    # the slow direction contracts by at least 1 - gamma * m / 2 per step
    assert errors[1500] <= errors[500] * (1.0 - 0.5 * gamma) ** 1000
    assert errors[-1] <= 1e-6
