"""Monte Carlo designs with controlled unobserved confounding.

All designs share the same confounding mechanism: two latent shocks
u_z and u_w built from shared standard normals, leaked into the
negative controls, the treatment, and the outcome. The continuous
designs differ only in the counterfactual curve; the no-confounding
variant keeps the quadratic curve but makes u_z and u_w independent;
the discrete variant draws a Bernoulli treatment with true contrast
2.2 between the arms.

Draws use splittable streams keyed by (master seed, replicate,
variable role), so sweeping one block's dimension never perturbs
another block's values.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import Dataset, from_arrays
from .effects import EffectRequest, TuningPlan, run_end_to_end
from .errors import InputError, KernelncError, NumericalError

DESIGN_KINDS = ("quadratic", "sigmoid", "peaked", "no_confounding", "discrete")
ESTIMATOR_NAMES = ("nc", "te")

WORKERS_ENV = "KERNELNC_WORKERS"

# Curve-MSE scoring grid for continuous designs: the treatment support,
# meaning the truncated logistic link range widened by two standard
# deviations of the additive confounder shift 0.25 * u_w (sd 0.25*sqrt(2)).
MSE_GRID_SHIFT = 2.0 * 0.25 * np.sqrt(2.0)
MSE_GRID_LO = 0.1 - MSE_GRID_SHIFT
MSE_GRID_HI = 0.9 + MSE_GRID_SHIFT
MSE_GRID_POINTS = 100

_STREAMS = {"shared": 0, "z": 1, "w": 2, "x": 3, "treatment": 4}


@dataclass(frozen=True)
class SimDesign:
    """One design configuration: curve kind, sample size, dimensions."""

    kind: str = "quadratic"
    n: int = 1000
    dim_x: int = 5
    dim_z: int = 1
    dim_w: int = 1

    def __post_init__(self) -> None:
        if self.kind not in DESIGN_KINDS:
            raise InputError(f"unknown design kind {self.kind!r}")
        if self.n < 2:
            raise InputError(f"need n >= 2, got {self.n}")
        for name in ("dim_x", "dim_z", "dim_w"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")


def _stream(seed: int, replicate: int, role: str) -> np.random.Generator:
    key = np.random.SeedSequence(seed, spawn_key=(replicate, _STREAMS[role]))
    return np.random.default_rng(key)


def _decay(k: int) -> np.ndarray:
    return np.arange(1, k + 1, dtype=float) ** -2.0


def _link(t: np.ndarray) -> np.ndarray:
    return 0.1 + 0.8 * expit(t)


def _x_factor(p: int) -> np.ndarray:
    sigma = np.eye(p) + 0.5 * (np.eye(p, k=1) + np.eye(p, k=-1))
    return np.linalg.cholesky(sigma)


def true_curve(design: SimDesign, d) -> np.ndarray:
    """Counterfactual mean outcome at treatment level d."""
    d = np.asarray(d, dtype=float)
    if design.kind in ("quadratic", "no_confounding"):
        return d**2 + 1.2 * d
    if design.kind == "sigmoid":
        return np.log(np.abs(16.0 * d - 8.0) + 1.0) * np.sign(d - 0.5) + 1.2 * d
    if design.kind == "peaked":
        return 2.0 * (d**4 / 600.0 + np.exp(-4.0 * d**2) + d / 10.0 - 2.0) + 1.2 * d
    return 2.2 * d


def generate(design: SimDesign, seed: int, replicate: int = 0) -> Dataset:
    """Draw one dataset; same arguments always give identical bytes."""
    n = design.n
    confounded = design.kind != "no_confounding"
    eps = _stream(seed, replicate, "shared").standard_normal((n, 3 if confounded else 4))
    if confounded:
        u_z = eps[:, 0] + eps[:, 2]
        u_w = eps[:, 1] + eps[:, 2]
    else:
        u_z = eps[:, 0] + eps[:, 1]
        u_w = eps[:, 2] + eps[:, 3]
    leak = 0.5 if design.kind == "discrete" else 0.25
    z = _stream(seed, replicate, "z").uniform(-1.0, 1.0, (n, design.dim_z))
    z = z + leak * u_z[:, None]
    w = _stream(seed, replicate, "w").uniform(-1.0, 1.0, (n, design.dim_w))
    w = w + leak * u_w[:, None]
    x = _stream(seed, replicate, "x").standard_normal((n, design.dim_x))
    x = x @ _x_factor(design.dim_x).T
    bx = _decay(design.dim_x)
    bz = _decay(design.dim_z)
    bw = _decay(design.dim_w)

    if design.kind == "discrete":
        p = _link(x @ bx + z @ bz + u_w)
        draws = _stream(seed, replicate, "treatment").uniform(size=n)
        d = (draws < p).astype(float)
        y = 2.2 * d + 1.2 * (x @ bx + w @ bw) + d * x[:, 0] + 0.5 * u_z
        return from_arrays(y, d, x, z, w, d_categorical=True)
    if design.kind == "no_confounding":
        d = _link(3.0 * (x @ bx)) + 0.25 * u_w
        y = true_curve(design, d) + 1.2 * (x @ bx) + d * x[:, 0] + 0.25 * u_z
    else:
        d = _link(3.0 * (x @ bx) + 3.0 * (z @ bz)) + 0.25 * u_w
        y = true_curve(design, d) + 1.2 * (x @ bx + w @ bw) + d * x[:, 0] + 0.25 * u_z
    return from_arrays(y, d, x, z, w)


def dimension_sweep(base: SimDesign, dim_x=(), dim_z=(), dim_w=()) -> list[SimDesign]:
    """Variants of a base design along each dimension axis in turn."""
    out = [replace(base, dim_x=v) for v in dim_x]
    out += [replace(base, dim_z=v) for v in dim_z]
    out += [replace(base, dim_w=v) for v in dim_w]
    return out


def scoring_grid(design: SimDesign) -> np.ndarray:
    """Treatment levels where replicates are scored."""
    if design.kind == "discrete":
        return np.array([0.0, 1.0])
    return np.linspace(MSE_GRID_LO, MSE_GRID_HI, MSE_GRID_POINTS)


def score_replicate(
    design: SimDesign,
    seed: int,
    replicate: int,
    estimators=ESTIMATOR_NAMES,
    tuning: TuningPlan | None = None,
) -> dict[str, float]:
    """Generate one dataset and score each estimator on it.

    Continuous designs score the curve MSE against the true curve on
    :func:`scoring_grid`; the discrete design scores the estimated
    contrast between the treated and untreated arms.
    """
    data = generate(design, seed, replicate)
    grid = scoring_grid(design)
    request = EffectRequest("ate", grid=grid)
    out: dict[str, float] = {}
    for est in estimators:
        curve = run_end_to_end(data, request, tuning, estimator=est)
        if design.kind == "discrete":
            out[est] = float(curve.values[1] - curve.values[0])
        else:
            out[est] = float(np.mean((curve.values - true_curve(design, grid)) ** 2))
    return out


def _scoped_score(design, seed, replicate, estimators, tuning, limit_threads):
    if limit_threads:
        try:
            from threadpoolctl import threadpool_limits
        except ImportError:
            pass
        else:
            # Worker processes share the CPUs; keep each one single
            # threaded so the pool does not oversubscribe BLAS.
            with threadpool_limits(limits=1):
                return score_replicate(design, seed, replicate, estimators, tuning)
    return score_replicate(design, seed, replicate, estimators, tuning)


def _worker(args) -> tuple[int, dict[str, float] | None, str | None]:
    design, seed, replicate, estimators, tuning, limit_threads = args
    try:
        return replicate, _scoped_score(design, seed, replicate, estimators, tuning, limit_threads), None
    except KernelncError as err:
        return replicate, None, str(err)


@dataclass
class ReplicateReport:
    """Per-replicate scores plus deterministic aggregates.

    `mse` is the mean squared deviation of the per-replicate estimate
    from the true contrast for the discrete design; for continuous
    designs the per-replicate value is already a curve MSE, so `mse`
    is its mean and equals `mean`.
    """

    estimator: str
    replicates: np.ndarray
    values: np.ndarray
    mean: float
    sd: float
    mse: float
    failures: tuple[tuple[int, str], ...] = ()
    metadata: dict = field(default_factory=dict)


def _aggregate(values: np.ndarray, truth: float | None) -> tuple[float, float, float]:
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    if truth is None:
        mse = mean
    else:
        mse = float(np.mean((values - truth) ** 2))
    return mean, sd, mse


def resolve_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def run_experiment(
    design: SimDesign,
    replicates: int,
    seed: int,
    estimators=ESTIMATOR_NAMES,
    tuning: TuningPlan | None = None,
    workers: int | None = None,
    strict: bool = True,
) -> dict[str, ReplicateReport]:
    """Score every estimator over independent replicates.

    Fails fast by default, naming the failing replicate and seed;
    with strict=False failed replicates are skipped and reported.
    Aggregation folds values in replicate order regardless of worker
    scheduling, so results do not depend on the worker count.
    """
    if replicates < 1:
        raise InputError("need at least one replicate")
    for est in estimators:
        if est not in ESTIMATOR_NAMES:
            raise InputError(f"unknown estimator {est!r}")
    nworkers = resolve_workers(workers)
    jobs = [
        (design, seed, rep, tuple(estimators), tuning, nworkers > 1)
        for rep in range(replicates)
    ]
    results: dict[int, dict[str, float]] = {}
    failures: list[tuple[int, str]] = []
    if nworkers > 1:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            outcomes = list(pool.map(_worker, jobs))
    else:
        outcomes = [_worker(job) for job in jobs]
    for rep, scores, err in outcomes:
        if err is not None:
            if strict:
                raise NumericalError(
                    f"replicate {rep} (seed {seed}) failed: {err}"
                )
            failures.append((rep, err))
        else:
            results[rep] = scores

    truth = None
    if design.kind == "discrete":
        truth = float(true_curve(design, 1.0) - true_curve(design, 0.0))
    grid = scoring_grid(design)
    metadata = {
        "design": design.kind,
        "n": design.n,
        "dim_x": design.dim_x,
        "dim_z": design.dim_z,
        "dim_w": design.dim_w,
        "seed": seed,
        "replicates": replicates,
        "tuning_mode": (tuning or TuningPlan()).mode,
        "scoring_grid": f"{grid.size} points on [{grid[0]:g}, {grid[-1]:g}]",
        "curve": "quadratic" if design.kind == "no_confounding" else design.kind,
        "failed": len(failures),
    }
    reports: dict[str, ReplicateReport] = {}
    kept = sorted(results)
    for est in estimators:
        values = np.array([results[rep][est] for rep in kept])
        if values.size == 0:
            raise NumericalError(f"every replicate failed (seed {seed})")
        mean, sd, mse = _aggregate(values, truth)
        reports[est] = ReplicateReport(
            estimator=est,
            replicates=np.array(kept, dtype=int),
            values=values,
            mean=mean,
            sd=sd,
            mse=mse,
            failures=tuple(failures),
            metadata=dict(metadata),
        )
    return reports
