# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Experiment orchestration: potentials from configs, the mode and Laplace reference, the
selected sampler, metric series with plateau stopping, and every emitted artifact."""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.optimize
import yaml

from async_sgld import report
from async_sgld.config import ExperimentConfig, dump_config, load_config
from async_sgld.errors import DataError, DimensionError, GridLeakageError, InvalidInputError
from async_sgld.executor import WorkerConfig, measure_staleness, run_sync, run_wcon, run_wicon
from async_sgld.langevin import NoiseParams, StepSchedule, aux_stream, validate_schedule
from async_sgld.metrics import (
    GaussianMeasure,
    GridSpec,
    SampleCloud,
    amari_distance,
    kl_histogram,
    laplace_gaussian,
    laplace_reference,
    project,
    w2_empirical,
)
from async_sgld.potentials import (
    AssumptionReport,
    BatchSpec,
    Potential,
    QuadraticSpec,
    RegressionSpec,
    RicaSpec,
    hessian,
    make_quadratic,
    make_regression,
    make_rica,
    verify_assumptions,
)
from async_sgld.records import (
    RunRecord,
    read_frame_csv,
    read_record_bin,
    write_frame_csv,
    write_record_bin,
    write_record_csv,
)
from async_sgld.simulator import DelayedSimulator, DelayModel
from async_sgld.theory import TheoryParams, theory_table

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CIFAR_RECORD = 3073
CIFAR_SIDE = 32
NOT_REACHED = -1
METRIC_COLUMNS = ["iter", "wall_ns", "w2", "kl", "delay_mean", "delay_max", "objective"]

# probes for the empirical m / L / G check of the configured potential
_PROBES = 64
# KL and slice grids span this many Laplace standard deviations around x*
_GRID_SPAN = 5.0


# --- data ---------------------------------------------------------------------------------


def load_cifar10(path: PathLike) -> np.ndarray:
    """Read a CIFAR-10 binary batch.

    Each record is one label byte (0-9) followed by 3072 pixel bytes (3 x 32 x 32,
    row-major). Labels are checked and dropped.

    Returns:
        A k x 3072 float matrix of pixels scaled to [0, 1].

    Raises:
        DataError: missing file, a size that is not a multiple of 3073 or a bad label.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"CIFAR-10 file {path} does not exist")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD:
        raise DataError(f"{path} holds {raw.size} bytes, not a multiple of {CIFAR_RECORD}")
    records = raw.reshape(-1, CIFAR_RECORD)
    labels = records[:, 0]
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DataError(f"record {bad} of {path} has label byte {labels[bad]}")
    logger.debug("read %d CIFAR-10 records from %s", records.shape[0], path)
    return records[:, 1:].astype(np.float64) / 255.0


def cifar_patches(
    images: np.ndarray, patch: int, n_patches: int, rng: np.random.Generator
) -> np.ndarray:
    """Random patch x patch grayscale crops, each centred on its own mean."""
    if not 1 <= patch <= CIFAR_SIDE:
        raise InvalidInputError(f"patch size must lie in [1, {CIFAR_SIDE}], got {patch}")
    if images.ndim != 2 or images.shape[1] != 3 * CIFAR_SIDE**2:
        raise DimensionError(f"expected k x 3072 images, got shape {images.shape}")
    gray = images.reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).mean(axis=1)
    which = rng.integers(0, gray.shape[0], size=n_patches)
    rows = rng.integers(0, CIFAR_SIDE - patch + 1, size=n_patches)
    cols = rng.integers(0, CIFAR_SIDE - patch + 1, size=n_patches)
    crops = np.stack(
        [gray[i, r : r + patch, c : c + patch].ravel() for i, r, c in zip(which, rows, cols)]
    )
    return crops - crops.mean(axis=1, keepdims=True)


def synthetic_ica(
    dim: int, n_samples: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Laplace sources seen through a random mixing matrix.

    Returns:
        The n x dim observations X = S A^T scaled to unit overall variance, and A.
    """
    if dim < 2 or n_samples < 1:
        raise InvalidInputError(f"need dim >= 2 and samples >= 1, got {dim}, {n_samples}")
    sources = rng.laplace(size=(n_samples, dim))
    mixing = rng.standard_normal((dim, dim))
    observed = sources @ mixing.T
    return observed / observed.std(), mixing


# --- potentials and the mode ----------------------------------------------------------------


def build_potential(cfg: ExperimentConfig) -> Tuple[Potential, Dict[str, np.ndarray]]:
    """The configured potential plus ground truth for the summary.

    Extras hold `true_coeffs` for regression and `mixing` for synthetic RICA.
    """
    if cfg.potential == "quadratic":
        diag = np.array(cfg.quadratic_diag, dtype=np.float64)
        b = np.zeros(diag.size) if cfg.quadratic_b is None else np.array(cfg.quadratic_b)
        spec = QuadraticSpec(A=np.diag(diag), b=b, grad_noise_std=cfg.quadratic_grad_noise)
        return make_quadratic(spec), {}

    rng = aux_stream(cfg.seed, "data")
    if cfg.potential == "regression":
        potential, coeffs = make_regression(
            RegressionSpec(
                true_coeffs=np.array(cfg.regression_coeffs),
                n_samples=cfg.regression_samples,
                data_noise_std=cfg.regression_noise,
                stream=cfg.regression_stream,
            ),
            rng,
        )
        return potential, {"true_coeffs": coeffs}

    extras: Dict[str, np.ndarray] = {}
    if cfg.rica_data == "cifar10":
        assert cfg.rica_path is not None
        data = cifar_patches(load_cifar10(cfg.rica_path), cfg.rica_patch, cfg.rica_samples, rng)
    else:
        data, extras["mixing"] = synthetic_ica(cfg.rica_dim, cfg.rica_samples, rng)
    potential = make_rica(RicaSpec(lam=cfg.rica_lambda, data=data), aux_stream(cfg.seed, "probe"))
    return potential, extras


def initial_point(cfg: ExperimentConfig, p: Potential) -> np.ndarray:
    """Configured x0, else the origin (the identity filter bank for RICA)."""
    if cfg.x0 is not None:
        x0 = np.array(cfg.x0, dtype=np.float64)
        if x0.shape != (p.dim,):
            raise DimensionError(f"x0 must have length {p.dim}, got {x0.size}")
        return x0
    if p.name == "rica":
        side = math.isqrt(p.dim)
        return np.eye(side).ravel()
    return np.zeros(p.dim)


def _descend(p: Potential, x: np.ndarray, tol: float, max_iters: int) -> Tuple[np.ndarray, int]:
    step = 1.0 / p.L
    value, g = p.value(x), p.grad(x)
    for it in range(max_iters):
        g_sq = float(g @ g)
        if math.sqrt(g_sq) <= tol:
            return x, it
        t = step
        for _ in range(60):
            x_new = x - t * g
            v_new = p.value(x_new)
            if v_new <= value - 0.5 * t * g_sq:
                break
            t *= 0.5
        else:
            # round-off floor of the Armijo test
            t = 1.0 / p.L
            x_new = x - t * g
            v_new = p.value(x_new)
        x, value, g = x_new, v_new, p.grad(x_new)
        step = 2.0 * t
    return x, max_iters


def _newton(p: Potential, x: np.ndarray, tol: float, max_iters: int) -> Tuple[np.ndarray, int]:
    for it in range(max_iters):
        g = p.grad(x)
        if np.linalg.norm(g) <= tol:
            return x, it
        try:
            direction = scipy.linalg.solve(hessian(p, x), g, assume_a="sym")
        except (np.linalg.LinAlgError, ValueError):
            direction = g / p.L
        if not float(g @ direction) > 0.0:
            direction = g / p.L
        value, t = p.value(x), 1.0
        while p.value(x - t * direction) > value - 0.5 * t * float(g @ direction) and t > 1e-12:
            t *= 0.5
        x = x - t * direction
    return x, max_iters


def find_mode(
    p: Potential,
    x0: np.ndarray,
    tol: float = 1e-7,
    max_iters: int = 100000,
    method: str = "gd",
) -> np.ndarray:
    """Deterministic minimizer of U started at `x0`, run until ||grad U|| <= tol.

    `gd` (full-gradient descent with Armijo backtracking) is the reference method and the
    default. `newton` (Hessian solves) and `lbfgs` (scipy, then polished by `gd`) only
    accelerate it on ill-conditioned targets such as the regression design; all three stop on
    the same gradient-norm criterion and so return the same mode.
    Running out of iterations is logged and the last iterate returned.

    Raises:
        InvalidInputError: tol <= 0, max_iters < 1 or an unknown method.
    """
    if not tol > 0.0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    if max_iters < 1:
        raise InvalidInputError(f"max_iters must be >= 1, got {max_iters}")
    x = np.array(x0, dtype=np.float64)
    if x.shape != (p.dim,):
        raise DimensionError(f"x0 must have length {p.dim}, got shape {x.shape}")

    if method == "gd":
        x, used = _descend(p, x, tol, max_iters)
    elif method == "newton":
        x, used = _newton(p, x, tol, max_iters)
    elif method == "lbfgs":
        result = scipy.optimize.minimize(
            p.value, x, jac=p.grad, method="L-BFGS-B", options={"maxiter": max_iters, "gtol": tol}
        )
        x, polish = _descend(p, result.x, tol, max(1, max_iters - int(result.nit)))
        used = int(result.nit) + polish
    else:
        raise InvalidInputError(f"unknown mode finder {method!r}; expected gd, newton or lbfgs")

    grad_norm = float(np.linalg.norm(p.grad(x)))
    if grad_norm > tol:
        logger.warning(
            "mode finder stopped short of tolerance",
            extra={"method": method, "iterations": used, "grad_norm": grad_norm, "tol": tol},
        )
    else:
        logger.info("found the %s mode", p.name, extra={"method": method, "iterations": used})
    return x


# --- setup ------------------------------------------------------------------------------------


@dataclass(eq=False)
class KlTarget:
    """Grid and tabulated log-density used for every KL evaluation of a run."""

    coords: List[int]
    grid: GridSpec
    log_density: Dict[Tuple[float, ...], float]

    def log_u(self, center: np.ndarray) -> float:
        """Tabulated log-density at a grid center."""
        return self.log_density[tuple(center)]


@dataclass(eq=False)
class Setup:
    """Everything a run needs besides the sampler."""

    config: ExperimentConfig
    potential: Potential
    x0: np.ndarray
    x_star: np.ndarray
    sigma: float
    gaussian: GaussianMeasure
    reference: SampleCloud
    assumptions: AssumptionReport
    kl: Optional[KlTarget]
    extras: Dict[str, np.ndarray]


def _slice_coords(dim: int, max_dim: int) -> List[int]:
    return list(range(dim)) if dim <= max_dim else [0, 1]


def slice_grid(
    p: Potential, x_star: np.ndarray, sigma: float, coords: Sequence[int], bins: int
) -> GridSpec:
    """Box of +-5 Laplace standard deviations around x* on `coords` (sigma 0 counts as 1)."""
    spread = laplace_gaussian(p, x_star, sigma if sigma > 0.0 else 1.0)
    std = np.sqrt(np.diag(spread.cov))[list(coords)]
    center = x_star[list(coords)]
    return GridSpec.box(center - _GRID_SPAN * std, center + _GRID_SPAN * std, bins)


def _tabulate(
    p: Potential, x_star: np.ndarray, sigma: float, coords: Sequence[int], grid: GridSpec
) -> Dict[Tuple[float, ...], float]:
    scale = sigma if sigma > 0.0 else 1.0
    table = {}
    for c in grid.centers():
        x = x_star.copy()
        x[list(coords)] = c
        table[tuple(c)] = -p.value(x) / scale
    return table


def _marginal_table(
    gaussian: GaussianMeasure, coords: Sequence[int], grid: GridSpec
) -> Dict[Tuple[float, ...], float]:
    """Unnormalized log-density of the Laplace Gaussian marginal on `coords`."""
    idx = list(coords)
    precision = np.linalg.inv(gaussian.cov[np.ix_(idx, idx)])
    offsets = grid.centers() - gaussian.mean[idx]
    quad = np.einsum("ij,jk,ik->i", offsets, precision, offsets)
    return {tuple(c): -0.5 * float(q) for c, q in zip(grid.centers(), quad)}


def prepare(cfg: ExperimentConfig) -> Setup:
    """Build the potential, find its mode and draw the Laplace reference cloud.

    Raises:
        NumericalError: the Hessian at the mode is not positive definite.
    """
    potential, extras = build_potential(cfg)
    x0 = initial_point(cfg, potential)
    x_star = find_mode(
        potential, x0, cfg.mode_tol, cfg.mode_max_iters, cfg.resolved("mode_method")
    )
    sigma = float(cfg.resolved("sigma"))

    radius = max(1.0, float(np.linalg.norm(x0 - x_star)))
    assumptions = verify_assumptions(
        potential, _PROBES, aux_stream(cfg.seed, "probe"), radius=radius, center=x_star
    )
    if potential.G is None:
        potential = dataclasses.replace(potential, G=assumptions.G_hat)

    gaussian = laplace_gaussian(potential, x_star, sigma)
    reference = laplace_reference(
        potential, x_star, sigma, cfg.w2_window, aux_stream(cfg.seed, "reference")
    )
    kl = None
    if sigma > 0.0:
        coords = _slice_coords(potential.dim, cfg.kl_max_dim)
        grid = slice_grid(potential, x_star, sigma, coords, cfg.kl_bins)
        if len(coords) == potential.dim:
            table = _tabulate(potential, x_star, sigma, coords, grid)
        else:
            # marginal of the samples against the marginal of the Laplace surrogate
            table = _marginal_table(gaussian, coords, grid)
        kl = KlTarget(coords, grid, table)
    return Setup(
        config=cfg,
        potential=potential,
        x0=x0,
        x_star=x_star,
        sigma=sigma,
        gaussian=gaussian,
        reference=reference,
        assumptions=assumptions,
        kl=kl,
        extras=extras,
    )


# --- metric series ----------------------------------------------------------------------------


def evaluate(
    setup: Setup, tail: np.ndarray, step: int, wall_ns: int, delays: np.ndarray
) -> Dict[str, float]:
    """One metric row from the trailing iterates and the delays since the last row."""
    row: Dict[str, float] = {
        "iter": step,
        "wall_ns": wall_ns,
        "w2": math.nan,
        "kl": math.nan,
        "delay_mean": float(delays.mean()) if delays.size else math.nan,
        "delay_max": int(delays.max()) if delays.size else NOT_REACHED,
        "objective": math.nan,
    }
    if tail.shape[0] == 0:
        return row
    n = tail.shape[0]
    cloud = SampleCloud(tail)
    row["w2"] = w2_empirical(cloud, SampleCloud(setup.reference.points[:n]))
    row["objective"] = setup.potential.value(tail[-1])
    if setup.kl is not None:
        try:
            marginal = project(cloud, setup.kl.coords)
            row["kl"] = kl_histogram(marginal, setup.kl.log_u, setup.kl.grid)
        except GridLeakageError as exc:
            logger.info("no KL estimate at step %d: %s", step, exc)
    return row


def plateaued(w2: Sequence[float], window_evals: int, tol: float) -> bool:
    """Whether the best W2 of the last `window_evals` rows improves on the best before them
    by less than `tol`, relative."""
    if len(w2) <= window_evals:
        return False
    before = np.asarray(w2[:-window_evals], dtype=np.float64)
    recent = np.asarray(w2[-window_evals:], dtype=np.float64)
    if np.all(np.isnan(before)) or np.all(np.isnan(recent)):
        return False
    best_before, best_recent = float(np.nanmin(before)), float(np.nanmin(recent))
    if best_before == 0.0:
        return True
    return best_before - best_recent < tol * best_before


def _window_evals(cfg: ExperimentConfig) -> int:
    return math.ceil(cfg.plateau_window / cfg.metric_every)


def _checkpoints(n_steps: int, every: int) -> List[int]:
    points = list(range(every, n_steps + 1, every))
    if n_steps % every:
        points.append(n_steps)
    return points


def metric_series(
    setup: Setup, record: RunRecord, stop_on_plateau: bool = False
) -> Tuple[pd.DataFrame, Optional[int]]:
    """Metric rows of a finished record at the configured cadence.

    Returns:
        The rows and, with `stop_on_plateau`, the step at which the plateau rule fired.
    """
    cfg = setup.config
    rows: List[Dict[str, float]] = []
    previous = 0
    for step in _checkpoints(record.n_steps, cfg.metric_every):
        recorded = step // record.stride
        tail = record.iterates[max(0, recorded - cfg.w2_window) : recorded]
        wall_ns = int(record.wall_ns[step - 1])
        rows.append(evaluate(setup, tail, step, wall_ns, record.delays[previous:step]))
        previous = step
        if stop_on_plateau and plateaued(
            [r["w2"] for r in rows], _window_evals(cfg), cfg.plateau_tol
        ):
            return pd.DataFrame(rows, columns=METRIC_COLUMNS), step
    return pd.DataFrame(rows, columns=METRIC_COLUMNS), None


# --- runs ---------------------------------------------------------------------------------------


@dataclass(eq=False)
class RunResult:
    """Record, metric series, summary and artifact paths of one run."""

    record: RunRecord
    metrics: pd.DataFrame
    summary: Dict[str, object]
    paths: Dict[str, Path]


def _schedule(cfg: ExperimentConfig) -> StepSchedule:
    return StepSchedule.from_name(cfg.schedule, float(cfg.resolved("gamma")))


def _batch(cfg: ExperimentConfig) -> BatchSpec:
    return BatchSpec(cfg.resolved("batch"))


def _simulate_online(setup: Setup, s: StepSchedule) -> Tuple[RunRecord, pd.DataFrame, str]:
    cfg = setup.config
    iterations = int(cfg.resolved("iterations"))
    p = setup.potential
    if cfg.theory_mode and not validate_schedule(s, p.m, p.L, iterations):
        raise InvalidInputError(f"schedule {s.name} fails the step-size conditions in theory mode")
    if cfg.delay_law == "uniform":
        dm = DelayModel.uniform(cfg.tau, cfg.delay_mode)
    else:
        dm = DelayModel.fixed(cfg.tau, cfg.delay_mode)
    sim = DelayedSimulator(
        p,
        s,
        NoiseParams(setup.sigma),
        dm,
        setup.x0,
        cfg.seed,
        batch=_batch(cfg),
        stride=cfg.record_stride,
        wall_clock=cfg.wall_clock,
        config_digest=cfg.digest,
    )
    deadline = None if cfg.wall_clock_s is None else time.monotonic() + cfg.wall_clock_s
    rows: List[Dict[str, float]] = []
    reason = "iterations"
    while sim.steps < iterations:
        previous = sim.steps
        sim.advance(min(cfg.metric_every, iterations - previous))
        rows.append(
            evaluate(
                setup,
                sim.tail(cfg.w2_window),
                sim.steps,
                sim.elapsed_ns,
                sim.delays_since(previous),
            )
        )
        if plateaued([r["w2"] for r in rows], _window_evals(cfg), cfg.plateau_tol):
            reason = "plateau"
            break
        if deadline is not None and time.monotonic() >= deadline:
            reason = "wall_clock"
            break
    return sim.record(), pd.DataFrame(rows, columns=METRIC_COLUMNS), reason


def _run_threaded(setup: Setup, s: StepSchedule) -> Tuple[RunRecord, pd.DataFrame, str]:
    cfg = setup.config
    iterations = int(cfg.resolved("iterations"))
    wc = WorkerConfig(
        workers=cfg.workers,
        seed=cfg.seed,
        batch=_batch(cfg),
        iterations=iterations,
        wall_clock_s=cfg.wall_clock_s,
        stride=cfg.record_stride,
        wall_clock=cfg.wall_clock,
        config_digest=cfg.digest,
    )
    noise = NoiseParams(setup.sigma)
    if cfg.scheme == "sync":
        record = run_sync(setup.potential, s, noise, wc, setup.x0, sync_noise=cfg.sync_noise)
    elif cfg.scheme == "wcon":
        record = run_wcon(
            setup.potential, s, noise, wc, cfg.tau_cap, setup.x0, read_lock=cfg.read_lock
        )
    else:
        record = run_wicon(setup.potential, s, noise, wc, setup.x0)

    metrics, stop = metric_series(setup, record, stop_on_plateau=True)
    if stop is not None:
        return record.truncated(stop), metrics, "plateau"
    return record, metrics, "iterations" if record.n_steps >= iterations else "wall_clock"


def _float_list(x: np.ndarray) -> List[float]:
    return [float(v) for v in x]


def _last(frame: pd.DataFrame, column: str) -> float:
    return float(frame[column].iloc[-1]) if len(frame) else math.nan


def _summary(
    setup: Setup, record: RunRecord, metrics: pd.DataFrame, reason: str, elapsed: float
) -> Dict[str, object]:
    cfg, p = setup.config, setup.potential
    final = record.final()
    staleness = measure_staleness(record)
    summary: Dict[str, object] = {
        "config_digest": cfg.digest,
        "potential_digest": cfg.potential_digest,
        "potential": p.name,
        "dim": p.dim,
        "scheme": cfg.scheme,
        "workers": cfg.workers,
        "sigma": setup.sigma,
        "gamma": float(cfg.resolved("gamma")),
        "schedule": cfg.schedule,
        "steps": record.n_steps,
        "stop_reason": reason,
        "x_star": _float_list(setup.x_star),
        "distance_to_mode": float(np.linalg.norm(final - setup.x_star)),
        "final_w2": _last(metrics, "w2"),
        "final_kl": _last(metrics, "kl"),
        "final_objective": _last(metrics, "objective"),
        "delay_mean": staleness.mean,
        "delay_max": staleness.max,
        "m": p.m,
        "L": p.L,
        "G": float(p.G) if p.G is not None else math.nan,
        "assumptions": {
            "m_ok": setup.assumptions.m_ok,
            "L_ok": setup.assumptions.L_ok,
            "L_hat": setup.assumptions.L_hat,
            "G_hat": setup.assumptions.G_hat,
        },
    }
    if "true_coeffs" in setup.extras:
        summary["coeff_error"] = float(np.linalg.norm(final - setup.extras["true_coeffs"]))
    if "mixing" in setup.extras:
        side = setup.extras["mixing"].shape[0]
        summary["amari"] = amari_distance(final.reshape(side, side), setup.extras["mixing"])
    if cfg.wall_clock:
        summary["elapsed_s"] = elapsed
    return summary


def trajectory_frame(record: RunRecord) -> pd.DataFrame:
    """First two coordinates of x0 and every recorded iterate."""
    columns = min(2, record.dim)
    points = np.vstack([record.x0[None, :columns], record.iterates[:, :columns]])
    data: Dict[str, np.ndarray] = {"iter": np.concatenate([[0], record.iter_index])}
    for i in range(columns):
        data[f"x{i}"] = points[:, i]
    return pd.DataFrame(data)


def potential_slice(setup: Setup) -> pd.DataFrame:
    """exp(-U / sigma) on the grid through x* over the first two coordinates."""
    p, cfg = setup.potential, setup.config
    coords = _slice_coords(p.dim, 2)
    grid = setup.kl.grid if setup.kl is not None and setup.kl.coords == coords else None
    if grid is None:
        grid = slice_grid(p, setup.x_star, setup.sigma, coords, cfg.kl_bins)
    table = _tabulate(p, setup.x_star, setup.sigma, coords, grid)
    centers = grid.centers()
    log_density = np.array([table[tuple(c)] for c in centers])
    weights = np.exp(log_density - log_density.max())
    data: Dict[str, np.ndarray] = {f"x{i}": centers[:, i] for i in range(len(coords))}
    data["log_density"] = log_density
    data["density"] = weights / math.fsum(weights)
    return pd.DataFrame(data)


def _staleness_frame(record: RunRecord) -> pd.DataFrame:
    histogram = measure_staleness(record).histogram
    return pd.DataFrame({"delay": list(histogram), "count": list(histogram.values())})


def write_artifacts(
    out: Path, setup: Setup, record: RunRecord, metrics: pd.DataFrame, summary: Dict[str, object]
) -> Dict[str, Path]:
    """Write every run artifact to `out`; CSVs carry the config digest in their header."""
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config_digest": setup.config.digest}
    paths = {
        name: out / name
        for name in (
            "metrics.csv",
            "trajectory.csv",
            "staleness.csv",
            "potential_slice.csv",
            "record.csv",
            "record.bin",
            "config.yaml",
            "summary.yaml",
            "summary.txt",
        )
    }
    write_frame_csv(metrics, paths["metrics.csv"], meta)
    write_frame_csv(trajectory_frame(record), paths["trajectory.csv"], meta)
    write_frame_csv(_staleness_frame(record), paths["staleness.csv"], meta)
    write_frame_csv(potential_slice(setup), paths["potential_slice.csv"], meta)
    write_record_csv(record, paths["record.csv"])
    write_record_bin(record, paths["record.bin"])
    dump_config(setup.config, paths["config.yaml"])
    paths["summary.yaml"].write_text(yaml.safe_dump(summary, sort_keys=False))
    report.render_summary(summary, paths["summary.txt"])
    return paths


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Mode, reference, sampler run, metric series and artifacts for one config.

    Raises:
        DataError: a referenced data file is missing or malformed.
        NumericalError: the Hessian at the mode is not positive definite, or the sampler
            diverged.
    """
    started = time.monotonic()
    logger.info(
        "starting experiment",
        extra={"potential": cfg.potential, "scheme": cfg.scheme, "digest": cfg.digest},
    )
    setup = prepare(cfg)
    s = _schedule(cfg)
    if cfg.scheme == "sim":
        record, metrics, reason = _simulate_online(setup, s)
    else:
        record, metrics, reason = _run_threaded(setup, s)
    if reason == "plateau":
        logger.info("W2 plateaued, stopping at step %d", record.n_steps)

    summary = _summary(setup, record, metrics, reason, time.monotonic() - started)
    paths = write_artifacts(Path(cfg.out), setup, record, metrics, summary)
    logger.info(
        "experiment finished",
        extra={"steps": record.n_steps, "final_w2": summary["final_w2"], "out": cfg.out},
    )
    return RunResult(record=record, metrics=metrics, summary=summary, paths=paths)


def _stored_config(run_dir: Path) -> ExperimentConfig:
    path = run_dir / "config.yaml"
    if not path.is_file():
        raise DataError(f"{run_dir} holds no config.yaml; not a run directory")
    return load_config(path)


def recompute_metrics(run_dir: PathLike) -> pd.DataFrame:
    """Rebuild the metric series of a stored run from `record.bin` and `config.yaml`.

    Raises:
        DataError: missing artifacts or a record produced by a different config.
    """
    run_dir = Path(run_dir)
    cfg = _stored_config(run_dir)
    record = read_record_bin(run_dir / "record.bin")
    if record.config_digest != cfg.digest:
        raise DataError(f"record in {run_dir} was not produced by its stored config")
    frame, _ = metric_series(prepare(cfg), record)
    write_frame_csv(frame, run_dir / "metrics_recomputed.csv", {"config_digest": cfg.digest})
    logger.info("recomputed %d metric rows for %s", len(frame), run_dir)
    return frame


def _first_reached(frame: pd.DataFrame, threshold: float) -> Tuple[int, int]:
    hits = np.flatnonzero(frame["w2"].to_numpy(dtype=np.float64) <= threshold)
    if hits.size == 0:
        return NOT_REACHED, NOT_REACHED
    row = frame.iloc[int(hits[0])]
    return int(row["iter"]), int(row["wall_ns"])


def compare_report(
    run_dirs: Sequence[PathLike], out: PathLike, threshold: float
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Time-to-threshold table and long-form aligned series over several runs.

    Writes `comparison.csv` (first iteration and wall-clock time at which W2 <= threshold,
    -1 when never reached) and `aligned.csv` to `out`.

    Raises:
        InvalidInputError: fewer than two runs.
        DataError: runs over different potentials or temperatures, or tampered artifacts.
    """
    if len(run_dirs) < 2:
        raise InvalidInputError(f"need at least two runs to compare, got {len(run_dirs)}")
    runs = []
    for run_dir in map(Path, run_dirs):
        cfg = _stored_config(run_dir)
        frame, meta = read_frame_csv(run_dir / "metrics.csv")
        if meta.get("config_digest") != cfg.digest:
            raise DataError(f"metrics in {run_dir} were not produced by its stored config")
        runs.append((str(run_dir), cfg, frame))

    targets = {(cfg.potential_digest, cfg.resolved("sigma")) for _, cfg, _ in runs}
    if len(targets) > 1:
        raise DataError("runs sample different potentials and cannot be compared")

    rows, aligned = [], []
    for name, cfg, frame in runs:
        first_iter, first_ns = _first_reached(frame, threshold)
        rows.append(
            {
                "run": name,
                "scheme": cfg.scheme,
                "workers": cfg.workers,
                "threshold": threshold,
                "iter_to_threshold": first_iter,
                "wall_ns_to_threshold": first_ns,
                "reached": first_iter != NOT_REACHED,
                "final_w2": _last(frame, "w2"),
            }
        )
        aligned.append(
            frame[["iter", "wall_ns", "w2"]].assign(
                run=name, scheme=cfg.scheme, workers=cfg.workers
            )
        )
    comparison = pd.DataFrame(rows)
    series = pd.concat(aligned, ignore_index=True)[
        ["run", "scheme", "workers", "iter", "wall_ns", "w2"]
    ]

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"threshold": repr(float(threshold))}
    write_frame_csv(comparison, out / "comparison.csv", meta)
    write_frame_csv(series, out / "aligned.csv", meta)
    logger.info("compared %d runs at W2 threshold %g", len(runs), threshold)
    return comparison, series


def theory_report(cfg: ExperimentConfig) -> pd.DataFrame:
    """Prescribed step sizes and iteration counts for the configured potential.

    W2_0 is the distance from the point mass at x0 to the Laplace Gaussian at the mode.

    Raises:
        InvalidInputError: the potential is not strongly convex or sigma is 0.
    """
    potential, _ = build_potential(cfg)
    if not potential.m > 0.0:
        raise InvalidInputError(
            f"the {potential.name} potential has m = 0; the convergence theory does not apply"
        )
    setup = prepare(cfg)
    p = setup.potential
    shift = float(np.sum((setup.x0 - setup.x_star) ** 2))
    tp = TheoryParams(
        m=p.m,
        L=p.L,
        d=p.dim,
        sigma=setup.sigma,
        G=float(p.G or 0.0),
        tau=cfg.tau,
        eps=cfg.eps,
        W2_0=math.sqrt(shift + float(np.trace(setup.gaussian.cov))),
    )
    table = theory_table(tp)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_frame_csv(table, out / "theory.csv", {"config_digest": cfg.digest})
    report.render_theory(tp, table, out / "theory.txt")
    return table

