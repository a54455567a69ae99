"""Product-kernel construction: hand values, symmetry, PSD, lengthscales."""

import numpy as np
import pytest

from kernelnc.errors import DegenerateScaleError, InputError
from kernelnc.kernels import (
    ColumnKernel,
    KernelSpec,
    gaussian_kernel,
    gram,
    indicator_kernel,
    median_heuristic,
    spec_from_data,
)

from oracle_dense import gram_loops, median_gap


def test_gaussian_hand_values():
    # unit gap at unit lengthscale decays by exactly exp(-1/2)
    assert gaussian_kernel([0.0], [1.0], [1.0]) == pytest.approx(
        0.6065306597126334, rel=1e-15
    )
    # two columns multiply: exp(-0.5) * exp(-0.5) = exp(-1)
    assert gaussian_kernel([0.0, 0.0], [1.0, 2.0], [1.0, 2.0]) == pytest.approx(
        0.36787944117144233, rel=1e-15
    )
    assert gaussian_kernel([3.0, -2.0], [3.0, -2.0], [0.7, 4.0]) == 1.0


def test_gaussian_rejects_bad_scales():
    with pytest.raises(InputError):
        gaussian_kernel([0.0], [1.0], [0.0])
    with pytest.raises(InputError):
        gaussian_kernel([0.0], [1.0], [np.inf])
    with pytest.raises(InputError):
        gaussian_kernel([0.0, 1.0], [1.0], [1.0])


def test_indicator_kernel():
    assert indicator_kernel([1.0, 2.0], [1.0, 2.0]) == 1.0
    assert indicator_kernel([1.0, 2.0], [1.0, 3.0]) == 0.0


def test_median_heuristic_hand_case():
    # gaps of {0, 1, 3} are {1, 2, 3}, median 2
    assert median_heuristic(np.array([0.0, 1.0, 3.0])[:, None]) == 2.0
    # even pair count averages the middle order statistics
    assert median_heuristic(np.array([0.0, 1.0, 2.0, 4.0])[:, None]) == 2.0


def test_median_heuristic_matches_brute_force():
    rng = np.random.default_rng(7)
    arr = rng.normal(size=(23, 3))
    for j in range(3):
        assert median_heuristic(arr, j) == median_gap(arr[:, j])


def test_median_heuristic_degenerate():
    with pytest.raises(DegenerateScaleError):
        median_heuristic(np.full((6, 1), 2.5))
    # more than half the pairs tie at zero gap
    with pytest.raises(DegenerateScaleError):
        median_heuristic(np.array([1.0, 1.0, 1.0, 1.0, 2.0])[:, None])


def test_gram_matches_dense_loops():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(17, 2))
    b = rng.normal(size=(9, 2))
    spec = KernelSpec.gaussian([0.8, 1.7])
    np.testing.assert_allclose(
        gram(a, b, spec), gram_loops(a, b, [0.8, 1.7]), rtol=1e-13, atol=0
    )


def test_gram_symmetry_is_bitwise():
    rng = np.random.default_rng(13)
    a = rng.normal(size=(40, 3))
    g = gram(a, a, KernelSpec.gaussian([1.0, 0.5, 2.0]))
    assert np.array_equal(g, g.T)
    assert np.array_equal(np.diag(g), np.ones(40))


def test_gram_is_psd_and_bounded():
    rng = np.random.default_rng(17)
    a = rng.normal(size=(30, 2))
    g = gram(a, a, KernelSpec.gaussian([0.6, 1.1]))
    assert np.all(g >= 0.0) and np.all(g <= 1.0)
    assert np.linalg.eigvalsh(g).min() > -1e-10


def test_gram_product_rule():
    rng = np.random.default_rng(19)
    a = rng.normal(size=(12, 2))
    both = gram(a, a, KernelSpec.gaussian([0.9, 1.4]))
    first = gram(a[:, :1], a[:, :1], KernelSpec.gaussian([0.9]))
    second = gram(a[:, 1:], a[:, 1:], KernelSpec.gaussian([1.4]))
    np.testing.assert_allclose(both, first * second, rtol=1e-15)


def test_gram_mixed_indicator_column():
    a = np.array([[0.0, 1.0], [0.0, 2.0], [1.0, 1.0]])
    spec = KernelSpec(
        (ColumnKernel("indicator"), ColumnKernel("gaussian", 1.0))
    )
    g = gram(a, a, spec)
    assert g[0, 2] == 0.0  # codes differ, product vanishes
    assert g[0, 1] == pytest.approx(0.6065306597126334, rel=1e-15)


def test_spec_from_data_overrides_and_flags():
    arr = np.array([[0.0, 5.0], [1.0, 6.0], [0.0, 9.0]])
    spec = spec_from_data(arr, categorical=[True, False], lengthscales=[None, 2.5])
    assert spec.columns[0].family == "indicator"
    assert spec.columns[1].lengthscale == 2.5
    auto = spec_from_data(arr[:, 1:])
    assert auto.columns[0].lengthscale == median_gap(arr[:, 1])


def test_spec_validation():
    with pytest.raises(InputError):
        ColumnKernel("gaussian", None)
    with pytest.raises(InputError):
        ColumnKernel("indicator", 1.0)
    with pytest.raises(InputError):
        KernelSpec(())
    with pytest.raises(InputError):
        gram(np.ones((3, 2)), np.ones((3, 1)), KernelSpec.gaussian([1.0]))
