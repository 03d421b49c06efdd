"""Standardization and the random Fourier feature approximation of the RBF kernel."""

import numpy as np
import pytest

from debiaskit.errors import (
    DimensionMismatchError,
    InsufficientSampleError,
    InvalidGammaError,
    NonFiniteError,
)
from debiaskit.kernel import (
    KernelMap,
    Standardizer,
    fit_rff,
    fit_standardizer,
    load_kernel_map,
    median_heuristic_gamma,
    save_kernel_map,
    transform_rff,
)


def rbf(x, y, gamma):
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-gamma * np.dot(diff, diff)))


# --- standardizer ---------------------------------------------------------


def test_two_point_mean_and_scale():
    fitted = fit_standardizer(np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(fitted.mean, [1.0])
    np.testing.assert_allclose(fitted.scale, [1.0])
    np.testing.assert_allclose(fitted.apply(np.array([[0.0], [2.0]])), [[-1.0], [1.0]])


def test_constant_column_floored_to_centred_zero():
    x = np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 3.0]])
    fitted = fit_standardizer(x)
    out = fitted.apply(x)
    np.testing.assert_allclose(out[:, 0], 0.0, atol=1e-12)
    assert fitted.scale[0] >= 1e-8


def test_standardizer_matches_recomputed_statistics():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 7)) * rng.uniform(0.5, 4.0, size=7) + rng.uniform(
        -3, 3, size=7
    )
    fitted = fit_standardizer(x)
    oracle = (x - x.mean(axis=0)) / x.std(axis=0)
    np.testing.assert_allclose(fitted.apply(x), oracle, atol=1e-10)


def test_test_rows_use_training_statistics():
    train = np.array([[0.0], [2.0]])
    fitted = fit_standardizer(train)
    np.testing.assert_allclose(fitted.apply(np.array([[5.0]])), [[4.0]])


def test_inverse_round_trip():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 4)) * 3.0 + 1.0
    fitted = fit_standardizer(x)
    np.testing.assert_allclose(fitted.inverse(fitted.apply(x)), x, atol=1e-12)


def test_standardizer_rejects_empty_and_nonfinite():
    with pytest.raises(InsufficientSampleError):
        fit_standardizer(np.zeros((0, 3)))
    with pytest.raises(NonFiniteError):
        fit_standardizer(np.array([[1.0, np.nan]]))


def test_standardizer_dimension_check():
    fitted = fit_standardizer(np.array([[0.0, 1.0], [2.0, 3.0]]))
    with pytest.raises(DimensionMismatchError):
        fitted.apply(np.zeros((2, 3)))


# --- feature map construction ---------------------------------------------


def test_same_seed_same_map():
    a = fit_rff(6, 32, 0.5, seed=123)
    b = fit_rff(6, 32, 0.5, seed=123)
    np.testing.assert_array_equal(a.frequencies, b.frequencies)
    np.testing.assert_array_equal(a.phases, b.phases)
    c = fit_rff(6, 32, 0.5, seed=124)
    assert not np.array_equal(a.frequencies, c.frequencies)


def test_median_heuristic_two_points():
    x = np.array([[0.0, 0.0], [2.0, 0.0]])
    # Median pairwise distance is 2, so gamma = 1 / (2 * 2^2) = 1/8.
    assert median_heuristic_gamma(x, seed=0) == pytest.approx(1.0 / 8.0)


def test_median_heuristic_needs_two_rows():
    with pytest.raises(InsufficientSampleError):
        median_heuristic_gamma(np.zeros((1, 3)), seed=0)


def test_median_heuristic_identical_points_rejected():
    with pytest.raises(InvalidGammaError):
        median_heuristic_gamma(np.ones((4, 2)), seed=0)


def test_invalid_gamma_values():
    with pytest.raises(InvalidGammaError):
        fit_rff(4, 16, 0.0, seed=0)
    with pytest.raises(InvalidGammaError):
        fit_rff(4, 16, -1.0, seed=0)
    with pytest.raises(InvalidGammaError):
        fit_rff(4, 16, float("inf"), seed=0)


def test_median_request_requires_sample():
    with pytest.raises(InsufficientSampleError):
        fit_rff(4, 16, "median", seed=0)


def test_median_request_uses_sample():
    x = np.array([[0.0, 0.0], [2.0, 0.0]])
    fitted = fit_rff(2, 16, "median", seed=5, x_sample=x)
    assert fitted.gamma == pytest.approx(1.0 / 8.0)


# --- transform properties -------------------------------------------------


def test_output_bounds():
    rng = np.random.default_rng(2)
    kernel_map = fit_rff(8, 64, 0.3, seed=9)
    out = transform_rff(kernel_map, rng.standard_normal((100, 8)))
    bound = np.sqrt(2.0 / 64) + 1e-12
    assert np.abs(out).max() <= bound


def test_self_inner_product_near_one():
    rng = np.random.default_rng(3)
    kernel_map = fit_rff(8, 2048, 0.3, seed=10)
    for _ in range(10):
        z = transform_rff(kernel_map, rng.standard_normal(8))
        assert abs(float(z @ z) - 1.0) <= 0.1


def test_distant_points_decorrelate():
    kernel_map = fit_rff(4, 2048, 1.0, seed=11)
    x = np.zeros(4)
    y = np.full(4, 10.0)
    z_x = transform_rff(kernel_map, x)
    z_y = transform_rff(kernel_map, y)
    # The exact kernel value is exp(-400), so the feature inner product
    # must sit within Monte Carlo noise of zero.
    assert abs(float(z_x @ z_y)) <= 0.1


def test_kernel_approximation_error_shrinks_with_width():
    rng = np.random.default_rng(4)
    gamma = 0.25
    pairs = rng.standard_normal((200, 2, 8))

    def mae(dprime, seed):
        kernel_map = fit_rff(8, dprime, gamma, seed=seed)
        errors = []
        for x, y in pairs:
            approx = float(transform_rff(kernel_map, x) @ transform_rff(kernel_map, y))
            errors.append(abs(approx - rbf(x, y, gamma)))
        return float(np.mean(errors))

    wide = mae(4096, seed=21)
    narrow = mae(64, seed=21)
    assert wide <= 0.05
    assert wide < narrow


def test_shift_invariance():
    rng = np.random.default_rng(5)
    kernel_map = fit_rff(6, 4096, 0.5, seed=12)
    shift = rng.standard_normal(6)
    for _ in range(20):
        x = rng.standard_normal(6)
        y = rng.standard_normal(6)
        base = float(transform_rff(kernel_map, x) @ transform_rff(kernel_map, y))
        moved = float(
            transform_rff(kernel_map, x + shift) @ transform_rff(kernel_map, y + shift)
        )
        assert abs(base - moved) <= 0.05


def test_transform_dimension_check():
    kernel_map = fit_rff(4, 16, 0.5, seed=13)
    with pytest.raises(DimensionMismatchError):
        transform_rff(kernel_map, np.zeros(5))


def test_single_row_matches_matrix_row():
    kernel_map = fit_rff(5, 32, 0.4, seed=14)
    x = np.random.default_rng(6).standard_normal((3, 5))
    matrix = transform_rff(kernel_map, x)
    np.testing.assert_allclose(transform_rff(kernel_map, x[1]), matrix[1], atol=1e-14)


def test_map_shape_properties():
    kernel_map = fit_rff(7, 28, 0.2, seed=15)
    assert kernel_map.input_dim == 7
    assert kernel_map.dprime == 28
    assert kernel_map.frequencies.shape == (28, 7)
    assert kernel_map.phases.shape == (28,)


def test_kernel_map_validation():
    with pytest.raises(DimensionMismatchError):
        KernelMap(np.zeros((4, 3)), np.zeros(5), 0.5, 0)


# --- persistence ----------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    kernel_map = fit_rff(6, 48, 0.7, seed=31)
    table = tmp_path / "freqs.emb"
    sidecar = tmp_path / "map.json"
    save_kernel_map(kernel_map, str(table), str(sidecar))
    loaded = load_kernel_map(str(table), str(sidecar))
    np.testing.assert_array_equal(loaded.frequencies, kernel_map.frequencies)
    np.testing.assert_array_equal(loaded.phases, kernel_map.phases)
    assert loaded.gamma == kernel_map.gamma
    assert loaded.seed == kernel_map.seed
    x = np.random.default_rng(7).standard_normal((5, 6))
    np.testing.assert_array_equal(
        transform_rff(loaded, x), transform_rff(kernel_map, x)
    )


def test_load_detects_tampered_sidecar(tmp_path):
    kernel_map = fit_rff(6, 48, 0.7, seed=31)
    table = tmp_path / "freqs.emb"
    sidecar = tmp_path / "map.json"
    save_kernel_map(kernel_map, str(table), str(sidecar))
    import json

    content = json.loads(sidecar.read_text())
    content["seed"] = 999
    sidecar.write_text(json.dumps(content))
    with pytest.raises(Exception):
        load_kernel_map(str(table), str(sidecar))
