"""Two-stage kernel ridge bridge from negative controls to outcomes.

Stage 1 ridge-projects each second-stage point onto the first-stage
sample through the (treatment, covariates, control-exposure) kernel;
stage 2 ridge-regresses outcomes on the projected features, which is
where the negative control outcomes enter. Both stages are closed-form
linear solves. The fitted bridge evaluates at arbitrary
(treatment, covariates, control-outcome) points and underpins every
effect estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import Dataset
from .errors import InputError, NumericalError
from .kernels import KernelSpec, gram
from .ridge import RidgeSystem


def _product_gram(
    left: Dataset, right: Dataset, specs: Mapping[str, KernelSpec], roles
) -> np.ndarray:
    out = None
    for role in roles:
        g = gram(left.block(role), right.block(role), specs[role])
        out = g if out is None else out * g
    return out


def _as_block(arr, dim: int, name: str) -> np.ndarray:
    """Normalize query points to shape (q, dim)."""
    a = np.asarray(arr, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        # A 1-D array is a batch of scalars when the block is 1-D,
        # otherwise a single point.
        a = a[:, None] if dim == 1 else a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise InputError(f"{name} queries must have {dim} column(s), got {a.shape}")
    return a


@dataclass
class BridgeGrams:
    """Kernel matrices shared by fitting and penalty tuning.

    `A` and `A_cross` cover the stage-1 regression blocks
    (d, x, z[, v]); `stage2_core` is the same product over the
    second-stage sample with the control-exposure factor dropped;
    `K_ww` is the control-outcome Gram.
    """

    roles: tuple[str, ...]
    A: np.ndarray
    A_cross: np.ndarray
    stage2_core: np.ndarray
    K_ww: np.ndarray


def compute_grams(
    stage1: Dataset, stage2: Dataset, specs: Mapping[str, KernelSpec]
) -> BridgeGrams:
    """Assemble every Gram matrix the bridge fit needs."""
    has_v = stage1.has_role("v")
    if stage2.has_role("v") != has_v:
        raise InputError("stage1 and stage2 disagree on the 'v' block")
    roles = ["d", "x", "z"] + (["v"] if has_v else [])
    missing = set(roles + ["w"]).difference(specs)
    if missing:
        raise InputError(f"kernel specs missing for roles {sorted(missing)}")
    w1 = stage1.block("w")
    return BridgeGrams(
        roles=tuple(roles),
        A=_product_gram(stage1, stage1, specs, roles),
        A_cross=_product_gram(stage1, stage2, specs, roles),
        stage2_core=_product_gram(stage2, stage2, specs, [r for r in roles if r != "z"]),
        K_ww=gram(w1, w1, specs["w"]),
    )


def project_stage1(grams: BridgeGrams, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Stage-1 solve: weights B and the derived second-stage kernel M.

    B = (A + n lam I)^{-1} A_cross, and M multiplies the second-stage
    core Gram by B' K_ww B, symmetrized to wash out round-off.
    """
    if not np.isfinite(lam) or lam < 0.0:
        raise InputError(f"lam must be finite and >= 0, got {lam}")
    n = grams.A.shape[0]
    try:
        B = RidgeSystem(grams.A, n * lam).solve(grams.A_cross)
    except NumericalError as err:
        raise NumericalError(f"stage 1: {err}") from err
    M = grams.stage2_core * (B.T @ grams.K_ww @ B)
    M = 0.5 * (M + M.T)
    return B, M


def solve_coef(M: np.ndarray, y: np.ndarray, xi: float) -> np.ndarray:
    """Stage-2 solve: coefficients (M M' + m xi M)^{-1} M y."""
    if not np.isfinite(xi) or xi < 0.0:
        raise InputError(f"xi must be finite and >= 0, got {xi}")
    m = M.shape[0]
    if y.shape != (m,):
        raise InputError(f"y must have shape ({m},), got {y.shape}")
    try:
        return RidgeSystem(M @ M.T + m * xi * M, 0.0).solve(M @ y)
    except NumericalError as err:
        raise NumericalError(f"stage 2: {err}") from err


@dataclass
class BridgeModel:
    """Fitted two-stage bridge.

    `stage1_weights` (n x m) holds the stage-1 ridge weights of each
    second-stage point over the first-stage sample; `stage2_gram`
    (m x m) is the derived second-stage kernel; `coef` (m,) are the
    bridge coefficients.
    """

    stage1: Dataset
    stage2: Dataset
    specs: dict[str, KernelSpec]
    lam: float
    xi: float
    stage1_weights: np.ndarray
    stage2_gram: np.ndarray
    coef: np.ndarray

    @property
    def has_v(self) -> bool:
        return "v" in self.specs


def fit_bridge(
    stage1: Dataset,
    stage2: Dataset,
    specs: Mapping[str, KernelSpec],
    lam: float,
    xi: float,
) -> BridgeModel:
    """Fit the bridge on a first-stage and a second-stage sample.

    Passing the same dataset for both stages gives the sample-reuse
    estimator; the cross-Gram then coincides with the square Gram bit
    for bit, so no special casing is needed.

    Solve failures carry a stage tag so callers can tell which linear
    system was at fault.
    """
    grams = compute_grams(stage1, stage2, specs)
    B, M = project_stage1(grams, lam)
    alpha = solve_coef(M, stage2.y, xi)
    kept = {role: specs[role] for role in (*grams.roles, "w")}
    return BridgeModel(stage1, stage2, kept, float(lam), float(xi), B, M, alpha)


def eval_bridge(model: BridgeModel, d, x, w, v=None) -> np.ndarray:
    """Evaluate the bridge at query (d, x, w[, v]) points.

    Each argument is a batch with one row per query (scalars and 1-D
    inputs are promoted); returns one value per query.
    """
    specs = model.specs
    dq = _as_block(d, specs["d"].dim, "d")
    xq = _as_block(x, specs["x"].dim, "x")
    wq = _as_block(w, specs["w"].dim, "w")
    nq = dq.shape[0]
    if xq.shape[0] != nq or wq.shape[0] != nq:
        raise InputError("d, x, w must carry the same number of query rows")
    kd = gram(model.stage2.block("d"), dq, specs["d"])
    kx = gram(model.stage2.block("x"), xq, specs["x"])
    kw = gram(model.stage1.block("w"), wq, specs["w"])
    feats = kd * kx * (model.stage1_weights.T @ kw)
    if model.has_v:
        if v is None:
            raise InputError("model includes a 'v' block; pass v queries")
        vq = _as_block(v, specs["v"].dim, "v")
        if vq.shape[0] != nq:
            raise InputError("v must carry the same number of query rows")
        feats = feats * gram(model.stage2.block("v"), vq, specs["v"])
    elif v is not None:
        raise InputError("model has no 'v' block")
    return model.coef @ feats


def stage2_fitted_values(model: BridgeModel) -> np.ndarray:
    """In-sample predictions for the second-stage outcomes."""
    return model.stage2_gram.T @ model.coef


def theoretical_embedding_penalty(n: int, smoothness: float) -> float:
    """Rate-optimal penalty n^{-1/(smoothness+1)} for an embedding ridge."""
    if n < 2:
        raise InputError(f"need n >= 2, got {n}")
    if not 1.0 < smoothness <= 2.0:
        raise InputError(f"smoothness must lie in (1, 2], got {smoothness}")
    return float(n) ** (-1.0 / (smoothness + 1.0))


def theoretical_schedule(
    n: int, m: int, c0: float, c: float, reuse: bool = False
) -> tuple[float, float]:
    """Rate-optimal (lam, xi) from the sample sizes and smoothness.

    `c0` is the stage-1 smoothness, `c` the stage-2 smoothness, both in
    (1, 2]. With sample reuse (m == n) the pair collapses to
    lam = n^{-1/(c0+1)}, xi = n^{-(c0-1)/((c0+1)(c+3))}; otherwise the
    xi exponent switches regime at a = (c+3)/(c+1), where
    a = (c0-1) log n / ((c0+1) log m).
    """
    for val, name in ((c0, "c0"), (c, "c")):
        if not 1.0 < val <= 2.0:
            raise InputError(f"{name} must lie in (1, 2], got {val}")
    if n < 2:
        raise InputError(f"need n >= 2, got {n}")
    lam = float(n) ** (-1.0 / (c0 + 1.0))
    if reuse:
        if m != n:
            raise InputError("sample reuse requires m == n")
        xi = float(n) ** (-(c0 - 1.0) / ((c0 + 1.0) * (c + 3.0)))
        return lam, xi
    if m < 2:
        raise InputError(f"need m >= 2, got {m}")
    a = (c0 - 1.0) * math.log(n) / ((c0 + 1.0) * math.log(m))
    if a <= (c + 3.0) / (c + 1.0):
        xi = float(m) ** (-a / (c + 3.0))
    else:
        xi = float(m) ** (-1.0 / (c + 1.0))
    return lam, xi
