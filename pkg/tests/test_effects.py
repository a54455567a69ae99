"""Effect curves from the bridge, the naive baseline, and the runner."""

import numpy as np
import pytest

from kernelnc.bridge import fit_bridge
from kernelnc.data import from_arrays
from kernelnc.effects import (
    EffectRequest,
    TuningPlan,
    default_grid,
    estimate_ate,
    estimate_att,
    estimate_cate,
    estimate_ds,
    estimate_te_baseline,
    kernel_specs,
    run_end_to_end,
    tuning_reports,
)
from kernelnc.errors import InputError
from kernelnc.kernels import KernelSpec

import oracle_dense as od

GRID = np.linspace(-1.0, 1.0, 7)


def _dataset(rng, n=24, with_v=False):
    return from_arrays(
        rng.normal(size=n),
        rng.normal(size=n),
        rng.normal(size=(n, 2)),
        rng.normal(size=n),
        rng.normal(size=n),
        rng.normal(size=n) if with_v else None,
    )


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(79)
    data = _dataset(rng)
    model = fit_bridge(data, data, kernel_specs(data), 0.05, 0.02)
    return data, model, rng


@pytest.fixture(scope="module")
def fitted_v():
    rng = np.random.default_rng(83)
    data = _dataset(rng, with_v=True)
    model = fit_bridge(data, data, kernel_specs(data), 0.05, 0.02)
    return data, model, rng


def _oracle_fit(data, lam, xi):
    roles = ["d", "x", "z", "w"] + (["v"] if data.has_role("v") else [])
    scales = {r: od.block_scales(data.block(r)) for r in roles}
    return od.fit_dense(
        data.block("d"), data.block("x"), data.block("z"), data.block("w"),
        data.y, scales, lam, xi,
        v=data.block("v") if data.has_role("v") else None,
    )


def test_ate_matches_dense_oracle(fitted):
    data, model, _ = fitted
    curve = estimate_ate(model, GRID)
    want = od.ate_curve(_oracle_fit(data, 0.05, 0.02), GRID)
    np.testing.assert_allclose(curve.values, want, rtol=1e-8)
    assert curve.metadata["effect"] == "ate"
    assert curve.metadata["lam"] == 0.05


def test_ds_over_training_population_equals_ate_bitwise(fitted):
    data, model, _ = fitted
    ate = estimate_ate(model, GRID)
    ds = estimate_ds(model, GRID, data.block("x"), data.block("w"))
    assert np.array_equal(ate.values, ds.values)
    assert ds.metadata["effect"] == "ds"


def test_ds_matches_dense_oracle_on_shifted_population(fitted):
    data, model, rng = fitted
    alt_x = rng.normal(loc=0.5, size=(10, 2))
    alt_w = rng.normal(loc=-0.3, size=(10, 1))
    curve = estimate_ds(model, GRID, alt_x, alt_w)
    want = od.ds_curve(_oracle_fit(data, 0.05, 0.02), GRID, alt_x, alt_w)
    np.testing.assert_allclose(curve.values, want, rtol=1e-8)


def test_ds_validates_population(fitted):
    _, model, _ = fitted
    with pytest.raises(InputError):
        estimate_ds(model, GRID, np.zeros((4, 2)), np.zeros((5, 1)))
    with pytest.raises(InputError):
        estimate_ds(model, GRID, np.zeros((4, 2)), np.zeros(4), alt_v=np.zeros(4))


def test_att_matches_dense_oracle(fitted):
    data, model, _ = fitted
    curve = estimate_att(model, GRID, d_value=0.4, lam1=0.07)
    want = od.att_curve(_oracle_fit(data, 0.05, 0.02), GRID, 0.4, 0.07)
    np.testing.assert_allclose(curve.values, want, rtol=1e-8)
    assert curve.metadata["extra_penalty"] == 0.07


def test_att_tunes_lam1_when_missing(fitted):
    _, model, _ = fitted
    curve = estimate_att(model, GRID, d_value=0.4)
    assert curve.metadata["extra_penalty"] > 0.0


def test_cate_matches_dense_oracle(fitted_v):
    data, model, _ = fitted_v
    curve = estimate_cate(model, GRID, v_value=0.2, lam2=0.04)
    want = od.cate_curve(_oracle_fit(data, 0.05, 0.02), GRID, 0.2, 0.04)
    np.testing.assert_allclose(curve.values, want, rtol=1e-8)


def test_cate_requires_v(fitted):
    _, model, _ = fitted
    with pytest.raises(InputError):
        estimate_cate(model, GRID, v_value=0.0, lam2=0.1)


def test_zero_outcome_gives_zero_curves(fitted_v):
    data, _, _ = fitted_v
    flat = from_arrays(
        np.zeros(data.n), data.block("d"), data.block("x"), data.block("z"),
        data.block("w"), data.block("v"),
    )
    model = fit_bridge(flat, flat, kernel_specs(flat), 0.05, 0.02)
    for curve in (
        estimate_ate(model, GRID),
        estimate_att(model, GRID, 0.0, lam1=0.1),
        estimate_cate(model, GRID, 0.0, lam2=0.1),
    ):
        np.testing.assert_allclose(curve.values, 0.0, atol=1e-12)


def test_te_baseline_hand_instance():
    # all-indicator kernels on distinct codes: full Gram is the identity,
    # so coef = y/(1+n lam) and the averaged rest factor is 1/n
    codes = np.array([0.0, 1.0, 2.0])
    y = np.array([3.0, -6.0, 9.0])
    data = from_arrays(y, codes, codes, codes, codes, d_categorical=True)
    specs = {r: KernelSpec.indicator(1) for r in ("d", "x", "z", "w")}
    curve = estimate_te_baseline(data, specs, grid=codes, lam=1.0 / 3.0)
    np.testing.assert_allclose(curve.values, y / 6.0, rtol=1e-12)
    assert curve.estimator == "te"
    assert curve.metadata["xi"] is None


def test_te_baseline_matches_dense_oracle(fitted):
    data, _, _ = fitted
    curve = estimate_te_baseline(data, kernel_specs(data), GRID, lam=0.09)
    scales = {r: od.block_scales(data.block(r)) for r in ("d", "x", "z", "w")}
    want = od.te_curve(
        data.block("d"), data.block("x"), data.block("z"), data.block("w"),
        data.y, scales, 0.09, GRID,
    )
    np.testing.assert_allclose(curve.values, want, rtol=1e-8)


def test_default_grid_continuous_and_categorical():
    d = np.arange(200.0)
    g = default_grid(d)
    assert g.shape == (100,)
    assert g[0] == np.percentile(d, 1.0) and g[-1] == np.percentile(d, 99.0)
    np.testing.assert_array_equal(
        default_grid(np.array([1.0, 0.0, 1.0]), categorical=True), [0.0, 1.0]
    )
    with pytest.raises(InputError):
        default_grid(d, size=1)


def test_request_validation():
    with pytest.raises(InputError):
        EffectRequest("dose")
    with pytest.raises(InputError):
        EffectRequest("ds")
    with pytest.raises(InputError):
        EffectRequest("att")
    with pytest.raises(InputError):
        EffectRequest("cate")
    EffectRequest("att", d_value=1.0)


def test_run_end_to_end_matches_manual_composition(fitted):
    data, model, _ = fitted
    plan = TuningPlan(mode="forced", lam=0.05, xi=0.02)
    curve = run_end_to_end(data, EffectRequest("ate", grid=GRID), plan)
    manual = estimate_ate(model, GRID)
    assert np.array_equal(curve.values, manual.values)
    assert curve.metadata["tuning_mode"] == "forced"
    assert len(curve.metadata["lengthscale_digest"]) == 12


def test_run_end_to_end_te_restrictions(fitted):
    data, _, _ = fitted
    with pytest.raises(InputError):
        run_end_to_end(data, EffectRequest("att", d_value=0.0), estimator="te")
    with pytest.raises(InputError):
        run_end_to_end(data, EffectRequest("ate"), estimator="gls")


def test_run_end_to_end_is_deterministic(fitted):
    data, _, _ = fitted
    req = EffectRequest("ate", grid=GRID)
    a = run_end_to_end(data, req)
    b = run_end_to_end(data, req)
    assert np.array_equal(a.values, b.values)
    assert a.metadata == b.metadata


def test_run_end_to_end_theoretical_mode(fitted):
    data, _, _ = fitted
    plan = TuningPlan(mode="theoretical", c0=2.0, c=2.0)
    curve = run_end_to_end(data, EffectRequest("ate", grid=GRID), plan)
    assert curve.metadata["lam"] == pytest.approx(data.n ** (-1.0 / 3.0), rel=1e-12)


def test_step_tagging_names_the_failing_stage():
    rng = np.random.default_rng(89)
    n = 12
    data = from_arrays(
        rng.normal(size=n), rng.normal(size=n), np.full((n, 1), 7.0),
        rng.normal(size=n), rng.normal(size=n),
    )
    with pytest.raises(Exception, match=r"step 1 \(kernel selection\)"):
        run_end_to_end(data, EffectRequest("ate", grid=GRID))


def test_tuning_reports_cover_every_penalty(fitted_v):
    data, _, _ = fitted_v
    cands = np.array([1e-3, 1e-1])
    reports = tuning_reports(data, candidates=cands)
    assert set(reports) == {"lam", "xi", "lam1", "lam2"}
    for rep in reports.values():
        np.testing.assert_array_equal(rep.grid, cands)
        assert rep.selected in cands
    te_reports = tuning_reports(data, estimator="te", candidates=cands)
    assert set(te_reports) == {"lam"}
