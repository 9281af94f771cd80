# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

import dataclasses
import logging

import numpy as np
import pandas as pd
import pytest
import yaml
from helpers import cifar_bytes

from async_sgld import harness
from async_sgld.config import ExperimentConfig, dump_config
from async_sgld.errors import DataError, DimensionError, InvalidInputError
from async_sgld.potentials import RegressionSpec, make_regression
from async_sgld.records import read_frame_csv, read_record_bin

logger = logging.getLogger(__name__)

DETERMINISTIC_ARTIFACTS = (
    "metrics.csv",
    "trajectory.csv",
    "staleness.csv",
    "potential_slice.csv",
    "record.csv",
    "record.bin",
    "summary.yaml",
)


def small_config(out, **changes) -> ExperimentConfig:
    base = ExperimentConfig(
        sigma=1.0,
        gamma=0.05,
        iterations=600,
        metric_every=100,
        w2_window=100,
        plateau_window=10000,
        wall_clock=False,
        out=str(out),
    )
    return dataclasses.replace(base, **changes)


def test_load_cifar10_scales_pixels(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(cifar_bytes([3]))
    images = harness.load_cifar10(path)
    assert images.shape == (1, 3072)
    np.testing.assert_array_equal(images, np.ones((1, 3072)))


def test_load_cifar10_reads_every_record(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(cifar_bytes([0, 9], pixel=0))
    images = harness.load_cifar10(path)
    assert images.shape == (2, 3072)
    assert not images.any()


@pytest.mark.parametrize(
    "payload",
    [cifar_bytes([3])[:3072], cifar_bytes([10]), b""],
    ids=["short", "bad-label", "empty"],
)
def test_load_cifar10_rejects_malformed_files(tmp_path, payload):
    path = tmp_path / "batch.bin"
    path.write_bytes(payload)
    with pytest.raises(DataError):
        harness.load_cifar10(path)


def test_load_cifar10_missing_file(tmp_path):
    with pytest.raises(DataError):
        harness.load_cifar10(tmp_path / "absent.bin")


def test_cifar_patches_are_centred(rng):
    images = rng.uniform(size=(5, 3072))
    patches = harness.cifar_patches(images, 4, 50, rng)
    assert patches.shape == (50, 16)
    np.testing.assert_allclose(patches.mean(axis=1), 0.0, atol=1e-12)


def test_cifar_patches_rejects_bad_sizes(rng):
    with pytest.raises(InvalidInputError):
        harness.cifar_patches(np.zeros((1, 3072)), 33, 1, rng)
    with pytest.raises(DimensionError):
        harness.cifar_patches(np.zeros((1, 100)), 4, 1, rng)


def test_synthetic_ica_has_unit_scale(rng):
    data, mixing = harness.synthetic_ica(3, 1000, rng)
    assert data.shape == (1000, 3)
    assert mixing.shape == (3, 3)
    assert data.std() == pytest.approx(1.0)


def test_find_mode_quadratic(quadratic):
    for method in ("gd", "newton", "lbfgs"):
        x = harness.find_mode(quadratic, np.zeros(2), tol=1e-9, method=method)
        np.testing.assert_allclose(x, [1.0, 0.25], atol=1e-8)


def test_find_mode_noiseless_regression_recovers_coefficients(rng):
    coeffs = np.array([0.5, -1.0, 1.5, -0.5, 0.25])
    p, _ = make_regression(RegressionSpec(coeffs, n_samples=500, data_noise_std=0.0), rng)
    x = harness.find_mode(p, np.zeros(5), tol=1e-9, method="newton")
    np.testing.assert_allclose(x, coeffs, atol=1e-6)


def test_find_mode_accelerations_agree_with_descent(rng):
    coeffs = np.array([0.5, -1.0, 1.5, -0.5, 0.25])
    p, _ = make_regression(RegressionSpec(coeffs, n_samples=500, data_noise_std=0.1), rng)
    reference = harness.find_mode(p, np.zeros(5), tol=1e-8, max_iters=2000000)
    for method in ("newton", "lbfgs"):
        x = harness.find_mode(p, np.zeros(5), tol=1e-8, method=method)
        np.testing.assert_allclose(x, reference, atol=1e-4)


def test_find_mode_rejects_bad_arguments(quadratic):
    with pytest.raises(InvalidInputError):
        harness.find_mode(quadratic, np.zeros(2), tol=0.0)
    with pytest.raises(InvalidInputError):
        harness.find_mode(quadratic, np.zeros(2), max_iters=0)
    with pytest.raises(InvalidInputError):
        harness.find_mode(quadratic, np.zeros(2), method="adam")
    with pytest.raises(DimensionError):
        harness.find_mode(quadratic, np.zeros(3))


def test_find_mode_warns_when_out_of_iterations(quadratic, caplog):
    with caplog.at_level(logging.WARNING, logger="async_sgld.harness"):
        x = harness.find_mode(quadratic, np.array([50.0, 50.0]), tol=1e-12, max_iters=1)
    assert x.shape == (2,)
    assert "stopped short" in caplog.text


def test_plateaued():
    assert not harness.plateaued([1.0, 0.9], 2, 1e-3)
    assert not harness.plateaued([1.0, 0.5, 0.25], 2, 1e-3)
    assert harness.plateaued([0.5, 0.5, 0.5], 2, 1e-3)
    assert harness.plateaued([0.0, 0.0, 0.0], 1, 1e-3)
    assert not harness.plateaued([float("nan")] * 4, 2, 1e-3)


def test_initial_point_defaults_and_validation(quadratic):
    cfg = ExperimentConfig()
    np.testing.assert_array_equal(harness.initial_point(cfg, quadratic), np.zeros(2))
    cfg = ExperimentConfig(x0=(1.0, 2.0))
    np.testing.assert_array_equal(harness.initial_point(cfg, quadratic), [1.0, 2.0])
    with pytest.raises(DimensionError):
        harness.initial_point(ExperimentConfig(x0=(1.0,)), quadratic)


def test_noiseless_undelayed_run_reaches_the_mode(run_dir):
    cfg = small_config(
        run_dir,
        quadratic_b=(1.0, 1.0),
        sigma=0.0,
        gamma=0.1,
        iterations=2000,
        metric_every=50,
        w2_window=50,
    )
    result = harness.run_experiment(cfg)
    assert result.summary["distance_to_mode"] <= 1e-6
    assert np.isnan(result.summary["final_kl"])


def test_run_writes_every_artifact(run_dir):
    result = harness.run_experiment(small_config(run_dir, tau=2))
    for name, path in result.paths.items():
        assert path.is_file(), name

    frame, meta = read_frame_csv(run_dir / "metrics.csv")
    assert meta["config_digest"] == small_config(run_dir, tau=2).digest
    assert list(frame.columns) == harness.METRIC_COLUMNS
    assert frame["iter"].tolist() == [100, 200, 300, 400, 500, 600]
    assert (frame["delay_max"] == 2).all()
    assert np.isfinite(frame["kl"]).all()

    trajectory, _ = read_frame_csv(run_dir / "trajectory.csv")
    assert trajectory["iter"].iloc[0] == 0
    assert len(trajectory) == 601

    density, _ = read_frame_csv(run_dir / "potential_slice.csv")
    assert density["density"].sum() == pytest.approx(1.0)

    summary = yaml.safe_load((run_dir / "summary.yaml").read_text())
    assert summary["steps"] == 600
    assert summary["stop_reason"] == "iterations"
    assert "elapsed_s" not in summary
    assert "final W2" in (run_dir / "summary.txt").read_text()


def test_record_stride_thins_the_stored_iterates(run_dir):
    result = harness.run_experiment(small_config(run_dir, record_stride=10))
    assert result.record.iterates.shape == (60, 2)
    assert result.record.n_steps == 600


@pytest.mark.parametrize("scheme", ["sim", "sync"])
def test_reruns_are_byte_identical(tmp_path, scheme):
    first = small_config(tmp_path / "a", scheme=scheme, workers=2 if scheme == "sync" else 1)
    second = dataclasses.replace(first, out=str(tmp_path / "b"))
    harness.run_experiment(first)
    harness.run_experiment(second)
    for name in DETERMINISTIC_ARTIFACTS:
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, name


@pytest.mark.parametrize("scheme", ["wcon", "wicon"])
def test_threaded_schemes_run_to_completion(run_dir, scheme):
    result = harness.run_experiment(small_config(run_dir, scheme=scheme, workers=2))
    assert result.record.n_steps == 600
    assert result.summary["stop_reason"] == "iterations"
    assert np.isfinite(result.metrics["w2"]).all()


def test_plateau_stops_the_run_early(run_dir):
    cfg = small_config(run_dir, iterations=20000, plateau_window=200, plateau_tol=0.5)
    result = harness.run_experiment(cfg)
    assert result.summary["stop_reason"] == "plateau"
    assert result.record.n_steps < 20000
    assert result.record.n_steps == int(result.metrics["iter"].iloc[-1])


def test_regression_run_reports_coefficient_error(run_dir):
    cfg = small_config(
        run_dir,
        potential="regression",
        regression_samples=2000,
        batch=100,
        sigma=0.01,
        gamma=0.01,
    )
    result = harness.run_experiment(cfg)
    assert result.summary["dim"] == 5
    assert result.summary["coeff_error"] < 1.0
    assert result.summary["assumptions"]["m_ok"]


def test_sliced_kl_of_exact_target_draws_is_small(run_dir, rng):
    cfg = small_config(
        run_dir,
        potential="regression",
        regression_samples=2000,
        seed=1,
        sigma=0.1,
        w2_window=1000,
        kl_bins=12,
    )
    setup = harness.prepare(cfg)
    assert setup.kl is not None and setup.kl.coords == [0, 1]
    draws = rng.multivariate_normal(setup.gaussian.mean, setup.gaussian.cov, 1000)
    row = harness.evaluate(setup, draws, 1000, 0, np.zeros(0, dtype=np.int64))
    assert row["kl"] < 0.2


def test_recompute_matches_the_online_series(run_dir):
    harness.run_experiment(small_config(run_dir, tau=3, delay_law="uniform"))
    harness.recompute_metrics(run_dir)
    online, _ = read_frame_csv(run_dir / "metrics.csv")
    recomputed, _ = read_frame_csv(run_dir / "metrics_recomputed.csv")
    pd.testing.assert_frame_equal(online, recomputed)


def test_recompute_rejects_a_foreign_record(run_dir):
    cfg = small_config(run_dir)
    harness.run_experiment(cfg)
    dump_config(dataclasses.replace(cfg, seed=7), run_dir / "config.yaml")
    with pytest.raises(DataError):
        harness.recompute_metrics(run_dir)


def test_stored_record_matches_the_run(run_dir):
    result = harness.run_experiment(small_config(run_dir))
    assert read_record_bin(run_dir / "record.bin").identical(result.record)


def test_compare_identical_runs(tmp_path):
    harness.run_experiment(small_config(tmp_path / "a"))
    runs = [tmp_path / "a", tmp_path / "a"]

    comparison, aligned = harness.compare_report(runs, tmp_path / "cmp", threshold=1e6)
    assert comparison["iter_to_threshold"].tolist() == [100, 100]
    assert comparison["reached"].all()
    assert len(aligned) == 12
    assert (tmp_path / "cmp" / "comparison.csv").is_file()
    assert (tmp_path / "cmp" / "aligned.csv").is_file()

    comparison, _ = harness.compare_report(runs, tmp_path / "cmp", threshold=1e-12)
    assert comparison["iter_to_threshold"].tolist() == [harness.NOT_REACHED] * 2
    assert comparison["wall_ns_to_threshold"].tolist() == [harness.NOT_REACHED] * 2
    assert not comparison["reached"].any()


def test_compare_rejects_different_targets(tmp_path):
    harness.run_experiment(small_config(tmp_path / "a"))
    harness.run_experiment(small_config(tmp_path / "b", quadratic_diag=(2.0, 4.0)))
    with pytest.raises(DataError):
        harness.compare_report([tmp_path / "a", tmp_path / "b"], tmp_path / "cmp", 0.1)


def test_compare_rejects_tampered_metrics(tmp_path):
    for name in ("a", "b"):
        harness.run_experiment(small_config(tmp_path / name))
    dump_config(small_config(tmp_path / "b", seed=3), tmp_path / "b" / "config.yaml")
    with pytest.raises(DataError):
        harness.compare_report([tmp_path / "a", tmp_path / "b"], tmp_path / "cmp", 0.1)


def test_compare_needs_two_runs(tmp_path):
    with pytest.raises(InvalidInputError):
        harness.compare_report([tmp_path / "a"], tmp_path / "cmp", 0.1)


def test_theory_report_for_a_quadratic(run_dir):
    table = harness.theory_report(small_config(run_dir, tau=4))
    assert set(table["variant"]) == {"kl", "w2"}
    n_eps = table[table["quantity"] == "n_eps"]["value"]
    assert (n_eps >= 1).all()
    assert (run_dir / "theory.csv").is_file()
    assert "[kl]" in (run_dir / "theory.txt").read_text()


def test_theory_report_needs_strong_convexity(run_dir):
    cfg = small_config(run_dir, potential="rica", rica_dim=2, rica_samples=50)
    with pytest.raises(InvalidInputError):
        harness.theory_report(cfg)
