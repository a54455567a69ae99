"""Treatment-effect curves from the fitted bridge, plus a naive baseline.

Every estimator reduces to one pattern: pair the bridge coefficients
with reweighting constants c_j that encode which population the
covariates and control outcomes are averaged over, then sweep the
treatment kernel over a grid. The dose-response estimator averages the
training population, the distribution-shift variant averages an
alternative sample, and the conditional variants (on a treatment level,
or on subgroup covariates) replace the uniform average with conditional
embedding weights.

The naive baseline regresses the outcome on treatment, covariates, and
both negative controls in a single kernel ridge and averages out
everything but the treatment; it ignores confounding by construction
and exists as a comparison target.
"""

from __future__ import annotations

import hashlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .bridge import (
    BridgeModel,
    _as_block,
    compute_grams,
    project_stage1,
    solve_coef,
    theoretical_embedding_penalty,
    theoretical_schedule,
)
from .data import Dataset
from .embeddings import cme_weights
from .errors import DegenerateScaleError, InputError, NumericalError
from .kernels import KernelSpec, gram, spec_from_data
from .ridge import RidgeSystem, TuneReport, loocv_embedding, loocv_scalar

EFFECT_KINDS = ("ate", "ds", "att", "cate")
ESTIMATORS = ("nc", "te")
TUNING_MODES = ("loocv", "theoretical", "forced")


@dataclass(frozen=True, eq=False)
class EffectRequest:
    """What to estimate and where to evaluate it.

    `grid` overrides the default treatment grid (100 points between the
    1st and 99th percentile of observed treatment, or the category
    codes when treatment is categorical). `alt_*` carry the target
    population for kind "ds", `d_value` the conditioning treatment for
    "att", `v_value` the subgroup point for "cate".
    """

    kind: str = "ate"
    grid: np.ndarray | None = None
    grid_size: int = 100
    alt_x: np.ndarray | None = None
    alt_w: np.ndarray | None = None
    alt_v: np.ndarray | None = None
    d_value: float | None = None
    v_value: np.ndarray | float | None = None

    def __post_init__(self) -> None:
        if self.kind not in EFFECT_KINDS:
            raise InputError(f"unknown effect kind {self.kind!r}")
        if self.grid is None and self.grid_size < 2:
            raise InputError("grid_size must be at least 2")
        if self.kind == "ds" and (self.alt_x is None or self.alt_w is None):
            raise InputError("kind 'ds' needs alt_x and alt_w")
        if self.kind == "att" and self.d_value is None:
            raise InputError("kind 'att' needs d_value")
        if self.kind == "cate" and self.v_value is None:
            raise InputError("kind 'cate' needs v_value")


@dataclass(frozen=True)
class TuningPlan:
    """Penalty selection policy for the end-to-end runner.

    Mode "loocv" tunes every penalty on the grid; "theoretical" sets
    them from the smoothness parameters; "forced" uses the values given
    here and falls back to LOOCV for any left as None, which is how the
    robustness sweeps pin one penalty while tuning the other.
    """

    mode: str = "loocv"
    lam: float | None = None
    xi: float | None = None
    lam1: float | None = None
    lam2: float | None = None
    c0: float = 2.0
    c: float = 2.0
    c1: float = 2.0
    c2: float = 2.0
    grid: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode not in TUNING_MODES:
            raise InputError(f"unknown tuning mode {self.mode!r}")


@dataclass
class EffectCurve:
    """Estimated effect on a treatment grid, with run metadata."""

    grid: np.ndarray
    values: np.ndarray
    estimator: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape or self.grid.ndim != 1:
            raise InputError("grid and values must be 1-D arrays of equal length")


@contextmanager
def _step(num: int, label: str):
    """Tag package errors with the pipeline step that raised them."""
    try:
        yield
    except (InputError, NumericalError, DegenerateScaleError) as err:
        raise type(err)(f"step {num} ({label}): {err}") from err


def kernel_specs(
    data: Dataset, lengthscales: Mapping[str, float] | None = None
) -> dict[str, KernelSpec]:
    """Per-role kernel specs: indicator for categorical columns,
    Gaussian with the median heuristic otherwise.

    `lengthscales` maps column names to explicit overrides.
    """
    overrides = dict(lengthscales or {})
    roles = ["d", "x", "z", "w"] + (["v"] if data.has_role("v") else [])
    specs: dict[str, KernelSpec] = {}
    for role in roles:
        forced = [overrides.pop(name, None) for name in data.names(role)]
        specs[role] = spec_from_data(
            data.block(role), data.categorical_flags(role), forced
        )
    if overrides:
        raise InputError(
            f"lengthscale overrides for unknown columns {sorted(overrides)}"
        )
    return specs


def lengthscale_digest(specs: Mapping[str, KernelSpec]) -> str:
    """Short stable digest of every block's kernel configuration."""
    parts = []
    for role in sorted(specs):
        for j, col in enumerate(specs[role].columns):
            parts.append(f"{role}[{j}]:{col.family}:{col.lengthscale!r}")
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:12]


def default_grid(d_values, size: int = 100, categorical: bool = False) -> np.ndarray:
    """Evaluation grid over the observed treatment range."""
    d = np.asarray(d_values, dtype=float).ravel()
    if d.size == 0:
        raise InputError("no treatment values")
    if categorical:
        return np.unique(d)
    if size < 2:
        raise InputError("grid size must be at least 2")
    lo, hi = np.percentile(d, [1.0, 99.0])
    return np.linspace(lo, hi, size)


def _resolve_grid(request: EffectRequest, data: Dataset) -> np.ndarray:
    if request.grid is not None:
        g = np.asarray(request.grid, dtype=float).ravel()
        if g.size == 0 or not np.all(np.isfinite(g)):
            raise InputError("explicit grid must be non-empty and finite")
        return g
    categorical = data.categorical_flags("d")[0]
    return default_grid(data.block("d")[:, 0], request.grid_size, categorical)


def _curve_values(
    model: BridgeModel, grid: np.ndarray, c: np.ndarray, extra: np.ndarray | None = None
) -> np.ndarray:
    kd = gram(model.stage2.block("d"), grid[:, None], model.specs["d"])
    weights = model.coef * c if extra is None else model.coef * extra * c
    return kd.T @ weights


def _base_metadata(model: BridgeModel, kind: str, extra_penalty: float | None) -> dict:
    return {
        "estimator": "nc",
        "effect": kind,
        "n": model.stage1.n,
        "m": model.stage2.n,
        "lam": model.lam,
        "xi": model.xi,
        "extra_penalty": extra_penalty,
    }


def estimate_ds(
    model: BridgeModel, grid, alt_x, alt_w, alt_v=None
) -> EffectCurve:
    """Dose-response under an alternative covariate/control population.

    Averages the bridge over the supplied (x, w[, v]) sample instead of
    the training one; with the training sample passed back in, this is
    exactly the in-population dose-response estimator.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    specs = model.specs
    ax = _as_block(alt_x, specs["x"].dim, "alt_x")
    aw = _as_block(alt_w, specs["w"].dim, "alt_w")
    if ax.shape[0] != aw.shape[0]:
        raise InputError("alt_x and alt_w must have the same number of rows")
    kx = gram(model.stage2.block("x"), ax, specs["x"])
    if model.has_v:
        if alt_v is None:
            raise InputError("model includes a 'v' block; pass alt_v")
        av = _as_block(alt_v, specs["v"].dim, "alt_v")
        if av.shape[0] != ax.shape[0]:
            raise InputError("alt_v must match alt_x rows")
        kx = kx * gram(model.stage2.block("v"), av, specs["v"])
    elif alt_v is not None:
        raise InputError("model has no 'v' block")
    kw = gram(model.stage1.block("w"), aw, specs["w"])
    pop = kx * (model.stage1_weights.T @ kw)
    c = pop.mean(axis=1)
    values = _curve_values(model, grid, c)
    return EffectCurve(grid, values, "nc", _base_metadata(model, "ds", None))


def estimate_ate(model: BridgeModel, grid) -> EffectCurve:
    """Dose-response curve averaged over the training population."""
    curve = estimate_ds(
        model,
        grid,
        model.stage1.block("x"),
        model.stage1.block("w"),
        model.stage1.block("v") if model.has_v else None,
    )
    curve.metadata["effect"] = "ate"
    return curve


def _reference_features(model: BridgeModel, include_v: bool) -> np.ndarray:
    """m x n features pairing stage-2 points with stage-1 observations."""
    specs = model.specs
    kx = gram(model.stage2.block("x"), model.stage1.block("x"), specs["x"])
    if include_v and model.has_v:
        kx = kx * gram(model.stage2.block("v"), model.stage1.block("v"), specs["v"])
    w1 = model.stage1.block("w")
    return kx * (model.stage1_weights.T @ gram(w1, w1, specs["w"]))


def _stage1_output_gram(model: BridgeModel, include_v: bool) -> np.ndarray:
    """Gram of the embedded outputs (x, w[, v]) over the stage-1 sample."""
    specs = model.specs
    x1 = model.stage1.block("x")
    w1 = model.stage1.block("w")
    out = gram(x1, x1, specs["x"]) * gram(w1, w1, specs["w"])
    if include_v and model.has_v:
        v1 = model.stage1.block("v")
        out = out * gram(v1, v1, specs["v"])
    return out


def estimate_att(
    model: BridgeModel, grid, d_value: float, lam1: float | None = None, candidates=None
) -> EffectCurve:
    """Dose-response among units whose observed treatment is `d_value`.

    The covariate/control average is reweighted by conditional embedding
    weights on the treatment block with penalty `lam1` (LOOCV-tuned when
    None). The curve sweeps counterfactual treatment levels.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    specs = model.specs
    d1 = model.stage1.block("d")
    K_dd = gram(d1, d1, specs["d"])
    if lam1 is None:
        lam1 = loocv_embedding(K_dd, _stage1_output_gram(model, True), candidates).selected
    kq = gram(d1, np.asarray([[float(d_value)]]), specs["d"])
    beta = cme_weights(K_dd, float(lam1), kq)[:, 0]
    c = _reference_features(model, True) @ beta
    values = _curve_values(model, grid, c)
    return EffectCurve(grid, values, "nc", _base_metadata(model, "att", float(lam1)))


def estimate_cate(
    model: BridgeModel, grid, v_value, lam2: float | None = None, candidates=None
) -> EffectCurve:
    """Dose-response conditional on subgroup covariates `v_value`.

    Requires a bridge fitted with a 'v' block. The subgroup point enters
    twice: through its own kernel factor and through conditional
    embedding weights (penalty `lam2`, LOOCV-tuned when None) that
    average the remaining covariates and control outcomes.
    """
    if not model.has_v:
        raise InputError("CATE needs a bridge fitted with a 'v' block")
    grid = np.asarray(grid, dtype=float).ravel()
    specs = model.specs
    v1 = model.stage1.block("v")
    K_vv = gram(v1, v1, specs["v"])
    if lam2 is None:
        lam2 = loocv_embedding(K_vv, _stage1_output_gram(model, False), candidates).selected
    v_row = _as_block(v_value, specs["v"].dim, "v")
    if v_row.shape[0] != 1:
        raise InputError("cate takes a single v point")
    kq = gram(v1, v_row, specs["v"])
    beta = cme_weights(K_vv, float(lam2), kq)[:, 0]
    c = _reference_features(model, False) @ beta
    kv2 = gram(model.stage2.block("v"), v_row, specs["v"])[:, 0]
    values = _curve_values(model, grid, c, extra=kv2)
    return EffectCurve(grid, values, "nc", _base_metadata(model, "cate", float(lam2)))


def estimate_te_baseline(
    data: Dataset,
    specs: Mapping[str, KernelSpec] | None = None,
    grid=None,
    lam: float | None = None,
    candidates=None,
) -> EffectCurve:
    """Single kernel ridge of the outcome on (d, x, z, w[, v]).

    Treats both negative controls as ordinary covariates, then averages
    them out over the training sample. Penalty LOOCV-tuned when None.
    """
    specs = dict(specs) if specs is not None else kernel_specs(data)
    roles = ["d", "x", "z", "w"] + (["v"] if data.has_role("v") else [])
    missing = set(roles).difference(specs)
    if missing:
        raise InputError(f"kernel specs missing for roles {sorted(missing)}")
    full = None
    rest = None
    for role in roles:
        block = data.block(role)
        g = gram(block, block, specs[role])
        full = g if full is None else full * g
        if role != "d":
            rest = g if rest is None else rest * g
    y = data.y
    if lam is None:
        lam = loocv_scalar(full, y, candidates).selected
    coef = RidgeSystem(full, data.n * float(lam)).solve(y)
    gbar = rest.mean(axis=1)
    if grid is None:
        grid = default_grid(
            data.block("d")[:, 0], categorical=data.categorical_flags("d")[0]
        )
    grid = np.asarray(grid, dtype=float).ravel()
    kd = gram(data.block("d"), grid[:, None], specs["d"])
    values = kd.T @ (coef * gbar)
    metadata = {
        "estimator": "te",
        "effect": "ate",
        "n": data.n,
        "m": data.n,
        "lam": float(lam),
        "xi": None,
        "extra_penalty": None,
    }
    return EffectCurve(grid, values, "te", metadata)


def _forced_or_none(tuning: TuningPlan, name: str) -> float | None:
    return getattr(tuning, name) if tuning.mode == "forced" else None


def run_end_to_end(
    data: Dataset,
    request: EffectRequest,
    tuning: TuningPlan | None = None,
    estimator: str = "nc",
    lengthscales: Mapping[str, float] | None = None,
) -> EffectCurve:
    """Full pipeline: kernels, penalties, bridge, embedding, effect.

    Steps are numbered in errors: (1) kernel selection, (2) penalty
    tuning, (3) bridge fit, (4) embedding weights, (5) effect
    evaluation. The same data serves both bridge stages.
    """
    tuning = tuning if tuning is not None else TuningPlan()
    if estimator not in ESTIMATORS:
        raise InputError(f"unknown estimator {estimator!r}")

    with _step(1, "kernel selection"):
        specs = kernel_specs(data, lengthscales)
        grid = _resolve_grid(request, data)

    if estimator == "te":
        if request.kind != "ate":
            raise InputError("the 'te' baseline only supports kind 'ate'")
        lam = _forced_or_none(tuning, "lam")
        if tuning.mode == "theoretical":
            lam = theoretical_embedding_penalty(data.n, tuning.c0)
        with _step(3, "bridge fit"):
            curve = estimate_te_baseline(data, specs, grid, lam, tuning.grid)
        curve.metadata.update(
            tuning_mode=tuning.mode, lengthscale_digest=lengthscale_digest(specs)
        )
        return curve

    n = data.n
    lam, xi = _forced_or_none(tuning, "lam"), _forced_or_none(tuning, "xi")
    lam1, lam2 = _forced_or_none(tuning, "lam1"), _forced_or_none(tuning, "lam2")
    if tuning.mode == "theoretical":
        lam, xi = theoretical_schedule(n, n, tuning.c0, tuning.c, reuse=True)
        lam1 = theoretical_embedding_penalty(n, tuning.c1)
        lam2 = theoretical_embedding_penalty(n, tuning.c2)

    with _step(1, "kernel selection"):
        grams = compute_grams(data, data, specs)
    if lam is None:
        with _step(2, "penalty tuning"):
            lam = loocv_embedding(grams.A, grams.K_ww, tuning.grid).selected
    with _step(3, "bridge fit"):
        B, M = project_stage1(grams, lam)
    if xi is None:
        with _step(2, "penalty tuning"):
            xi = loocv_scalar(M, data.y, tuning.grid).selected
    with _step(3, "bridge fit"):
        coef = solve_coef(M, data.y, xi)
    kept = {role: specs[role] for role in (*grams.roles, "w")}
    model = BridgeModel(data, data, kept, float(lam), float(xi), B, M, coef)

    if request.kind == "ate":
        with _step(5, "effect evaluation"):
            curve = estimate_ate(model, grid)
    elif request.kind == "ds":
        with _step(5, "effect evaluation"):
            curve = estimate_ds(model, grid, request.alt_x, request.alt_w, request.alt_v)
    elif request.kind == "att":
        with _step(4, "embedding weights"):
            if lam1 is None:
                lam1 = loocv_embedding(
                    gram(data.block("d"), data.block("d"), specs["d"]),
                    _stage1_output_gram(model, True),
                    tuning.grid,
                ).selected
        with _step(5, "effect evaluation"):
            curve = estimate_att(model, grid, request.d_value, lam1)
    else:
        with _step(4, "embedding weights"):
            if lam2 is None:
                lam2 = loocv_embedding(
                    gram(data.block("v"), data.block("v"), specs["v"]),
                    _stage1_output_gram(model, False),
                    tuning.grid,
                ).selected
        with _step(5, "effect evaluation"):
            curve = estimate_cate(model, grid, request.v_value, lam2)

    curve.metadata.update(
        tuning_mode=tuning.mode, lengthscale_digest=lengthscale_digest(specs)
    )
    return curve


def tuning_reports(
    data: Dataset,
    estimator: str = "nc",
    lengthscales: Mapping[str, float] | None = None,
    candidates=None,
) -> dict[str, TuneReport]:
    """Grid-search audit: every penalty's candidates and losses.

    For the bridge estimator this tunes lam, then xi on the resulting
    second-stage kernel, plus lam1 and (with a 'v' block) lam2. The
    baseline estimator has a single ridge penalty.
    """
    if estimator not in ESTIMATORS:
        raise InputError(f"unknown estimator {estimator!r}")
    specs = kernel_specs(data, lengthscales)
    reports: dict[str, TuneReport] = {}
    if estimator == "te":
        roles = ["d", "x", "z", "w"] + (["v"] if data.has_role("v") else [])
        full = None
        for role in roles:
            block = data.block(role)
            g = gram(block, block, specs[role])
            full = g if full is None else full * g
        reports["lam"] = loocv_scalar(full, data.y, candidates)
        return reports
    grams = compute_grams(data, data, specs)
    reports["lam"] = loocv_embedding(grams.A, grams.K_ww, candidates)
    _, M = project_stage1(grams, reports["lam"].selected)
    reports["xi"] = loocv_scalar(M, data.y, candidates)
    d1 = data.block("d")
    x1 = data.block("x")
    w1 = data.block("w")
    out_xw = gram(x1, x1, specs["x"]) * gram(w1, w1, specs["w"])
    out_full = out_xw
    if data.has_role("v"):
        v1 = data.block("v")
        out_full = out_xw * gram(v1, v1, specs["v"])
    reports["lam1"] = loocv_embedding(gram(d1, d1, specs["d"]), out_full, candidates)
    if data.has_role("v"):
        v1 = data.block("v")
        reports["lam2"] = loocv_embedding(gram(v1, v1, specs["v"]), out_xw, candidates)
    return reports
