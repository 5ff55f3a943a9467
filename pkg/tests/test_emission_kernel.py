"""Kernel emissions: kernel matrices, densities, GEM ascent, bandwidth CV."""

import numpy as np
import pytest

from nphmm.emissions.kernel import (
    KernelEmission,
    bandwidth_cv,
    cross_kernel,
    default_bandwidth_grid,
    density_eval,
    gem_emission_m_step,
    gem_inner_update,
    gem_objective,
    kernel_matrix,
)
from nphmm.errors import (
    DegenerateDenominatorError,
    EmptyGridError,
    InputError,
    SequenceTooShortError,
)

R0_GAUSS_1D = 1 / np.sqrt(2 * np.pi)


# ------------------------------------------------------------ kernel matrix

def test_kernel_matrix_identical_points():
    obs = np.full(5, 3.2)
    r = kernel_matrix(obs, "gaussian-spherical", 0.7)
    np.testing.assert_allclose(r, R0_GAUSS_1D)


def test_kernel_matrix_two_points_at_distance_w():
    r = kernel_matrix(np.array([0.0, 0.5]), "gaussian-spherical", 0.5)
    assert r[0, 1] == pytest.approx(np.exp(-0.5) / np.sqrt(2 * np.pi), abs=1e-9)
    assert r[0, 1] == pytest.approx(0.241971, abs=1e-6)
    np.testing.assert_allclose(np.diag(r), R0_GAUSS_1D)


def test_kernel_matrix_symmetry_and_diagonal_max():
    rng = np.random.default_rng(0)
    for kernel_id in ("gaussian-spherical", "epanechnikov-product"):
        obs = rng.normal(size=(15, 2))
        r = kernel_matrix(obs, kernel_id, 0.8)
        np.testing.assert_allclose(r, r.T, atol=1e-15)
        assert np.all(r >= 0)
        assert np.all(np.diag(r) >= r.max(axis=1) - 1e-15)


def test_epanechnikov_values():
    r = cross_kernel(np.array([0.0]), np.array([0.25, 2.0]), "epanechnikov-product", 0.5)
    # z = 0.5 -> 0.75 * (1 - 0.25); z = 4 -> outside support
    assert r[0, 0] == pytest.approx(0.75 * 0.75)
    assert r[0, 1] == 0.0
    # product form in d=2
    r2 = cross_kernel(
        np.array([[0.0, 0.0]]), np.array([[0.25, 0.25]]), "epanechnikov-product", 0.5
    )
    assert r2[0, 0] == pytest.approx((0.75 * 0.75) ** 2)


def test_kernel_matrix_rejects_bad_args():
    with pytest.raises(InputError):
        kernel_matrix(np.arange(3.0), "gaussian-spherical", 0.0)
    with pytest.raises(InputError):
        kernel_matrix(np.arange(3.0), "boxcar", 1.0)


# ---------------------------------------------------------------- densities

def test_density_single_anchor_at_anchor():
    em = KernelEmission(
        anchors=np.array([1.5]), bandwidth=0.3, weights=np.array([[1.0]])
    )
    assert density_eval(em, 0, 1.5) == pytest.approx(R0_GAUSS_1D / 0.3)


def test_density_integrates_to_one_1d():
    rng = np.random.default_rng(1)
    anchors = rng.normal(size=30)
    weights = rng.dirichlet(np.ones(30), size=2).T
    em = KernelEmission(anchors=anchors, bandwidth=0.4, weights=weights)
    grid = np.linspace(anchors.min() - 6, anchors.max() + 6, 4000)
    for j in range(2):
        total = np.trapezoid(density_eval(em, j, grid), grid)
        assert total == pytest.approx(1.0, abs=1e-3)


def test_density_integrates_to_one_2d():
    rng = np.random.default_rng(2)
    anchors = rng.normal(size=(12, 2))
    weights = rng.dirichlet(np.ones(12), size=1).T
    em = KernelEmission(anchors=anchors, bandwidth=0.5, weights=weights)
    xs = np.linspace(-5, 5, 220)
    xx, yy = np.meshgrid(xs, xs)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    vals = density_eval(em, 0, pts).reshape(xx.shape)
    total = np.trapezoid(np.trapezoid(vals, xs, axis=1), xs)
    assert total == pytest.approx(1.0, abs=2e-3)


def test_density_anchor_permutation_invariant():
    rng = np.random.default_rng(3)
    anchors = rng.normal(size=10)
    w = rng.dirichlet(np.ones(10))[:, None]
    em = KernelEmission(anchors=anchors, bandwidth=0.6, weights=w)
    perm = rng.permutation(10)
    em_p = KernelEmission(anchors=anchors[perm], bandwidth=0.6, weights=w[perm])
    q = rng.normal(size=7)
    np.testing.assert_allclose(
        density_eval(em, 0, q), density_eval(em_p, 0, q), rtol=1e-12
    )


def test_epanechnikov_density_integrates():
    rng = np.random.default_rng(4)
    anchors = rng.normal(size=15)
    w = rng.dirichlet(np.ones(15))[:, None]
    em = KernelEmission(
        anchors=anchors, bandwidth=0.7, weights=w,
        kernel_id="epanechnikov-product",
    )
    grid = np.linspace(anchors.min() - 2, anchors.max() + 2, 5000)
    total = np.trapezoid(density_eval(em, 0, grid), grid)
    assert total == pytest.approx(1.0, abs=1e-3)


# --------------------------------------------------------------- GEM update

def test_gem_constant_r_uniform_fixed_point():
    n, k = 8, 2
    r = np.full((n, n), R0_GAUSS_1D)
    tau = np.random.default_rng(5).dirichlet(np.ones(k), size=n)
    p = np.full((n, k), 1 / n)
    p2 = gem_inner_update(p, tau, r)
    np.testing.assert_allclose(p2, p, atol=1e-14)


def test_gem_single_anchor():
    p = np.ones((1, 3))
    tau = np.random.default_rng(6).dirichlet(np.ones(3), size=5)
    r = np.full((5, 1), 0.2)
    np.testing.assert_allclose(gem_inner_update(p, tau, r), p)


def test_gem_update_is_ascent_random():
    rng = np.random.default_rng(7)
    n, k, w, d = 20, 2, 0.5, 1
    for _ in range(25):
        obs = rng.normal(size=n)
        r = kernel_matrix(obs, "gaussian-spherical", w)
        tau = rng.dirichlet(np.ones(k), size=n)
        p = rng.dirichlet(np.ones(n), size=k).T
        p2 = gem_inner_update(p, tau, r)
        assert gem_objective(p2, tau, r, w, d) >= gem_objective(p, tau, r, w, d) - 1e-10
        np.testing.assert_allclose(p2.sum(axis=0), 1.0, atol=1e-12)


def test_gem_update_preserves_column_sums_exactly():
    rng = np.random.default_rng(8)
    r = kernel_matrix(rng.normal(size=30), "gaussian-spherical", 0.3)
    tau = rng.dirichlet(np.ones(3), size=30)
    p = rng.dirichlet(np.ones(30), size=3).T
    for _ in range(10):
        p = gem_inner_update(p, tau, r)
        np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-13)


def test_gem_degenerate_denominator():
    # epanechnikov kernel with tiny bandwidth: an isolated point sees nothing
    obs = np.array([0.0, 0.01, 5.0])
    r = kernel_matrix(obs, "epanechnikov-product", 0.001)
    p = np.array([[0.5], [0.5], [0.0]])
    tau = np.ones((3, 1))
    with pytest.raises(DegenerateDenominatorError):
        gem_inner_update(p, tau, r)


def test_gem_m_step_one_iter_equals_single_update():
    rng = np.random.default_rng(9)
    r = kernel_matrix(rng.normal(size=12), "gaussian-spherical", 0.4)
    tau = rng.dirichlet(np.ones(2), size=12)
    p = rng.dirichlet(np.ones(12), size=2).T
    np.testing.assert_array_equal(
        gem_emission_m_step(p, tau, r, inner_iters=1), gem_inner_update(p, tau, r)
    )


def test_gem_m_step_trace_nondecreasing():
    rng = np.random.default_rng(10)
    w, d = 0.4, 1
    r = kernel_matrix(rng.normal(size=25), "gaussian-spherical", w)
    tau = rng.dirichlet(np.ones(2), size=25)
    p = rng.dirichlet(np.ones(25), size=2).T
    vals = [gem_objective(p, tau, r, w, d)]
    for _ in range(8):
        p = gem_inner_update(p, tau, r)
        vals.append(gem_objective(p, tau, r, w, d))
    assert np.all(np.diff(vals) >= -1e-10)


def test_gem_m_step_constant_r_fixed_point():
    n = 6
    r = np.full((n, n), 0.39)
    tau = np.random.default_rng(11).dirichlet(np.ones(2), size=n)
    p = np.full((n, 2), 1 / n)
    p5 = gem_emission_m_step(p, tau, r, inner_iters=5)
    np.testing.assert_allclose(p5, p, atol=1e-12)


# ------------------------------------------------------------- bandwidth CV

def _loo_score(obs, w, kernel_id="gaussian-spherical"):
    pts = np.asarray(obs, dtype=float)
    n = len(pts)
    total = 0.0
    for i in range(n):
        s = 0.0
        for u in range(n):
            if u == i:
                continue
            z = (pts[i] - pts[u]) / w
            s += np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
        total += np.log(s / ((n - 1) * w))
    return total


def test_bandwidth_cv_single_element_grid():
    obs = np.array([0.0, 1.0, 2.0])
    assert bandwidth_cv(obs, grid=[0.37]) == 0.37


def test_bandwidth_cv_two_tight_clusters_middle_wins():
    obs = np.array([0.0, 0.5, 1.0, 1.5, 10.0, 10.5, 11.0, 11.5])
    spread = obs.max() - obs.min()
    grid = [0.01 * spread, 0.2 * spread, 5 * spread]
    w = bandwidth_cv(obs, grid=grid)
    assert w == pytest.approx(0.2 * spread)
    scores = [_loo_score(obs, g) for g in grid]
    assert np.argmax(scores) == 1


def test_bandwidth_cv_attains_grid_maximum():
    rng = np.random.default_rng(12)
    obs = rng.normal(size=40)
    grid = np.geomspace(0.05, 2.0, 12)
    w = bandwidth_cv(obs, grid=grid)
    scores = np.array([_loo_score(obs, g) for g in grid])
    assert w == pytest.approx(grid[np.argmax(scores)])


def test_bandwidth_cv_ties_prefer_larger():
    # two points: the LOO criterion is symmetric in the two directions, and
    # a duplicated grid value must return that value (trivially the larger)
    obs = np.array([0.0, 1.0])
    assert bandwidth_cv(obs, grid=[0.5, 0.5]) == 0.5


def test_bandwidth_cv_errors():
    with pytest.raises(EmptyGridError):
        bandwidth_cv(np.arange(5.0), grid=[])
    with pytest.raises(SequenceTooShortError):
        bandwidth_cv(np.array([1.0]), grid=[0.5])


def test_default_grid_shape_and_scale():
    rng = np.random.default_rng(13)
    obs = rng.normal(size=200)
    grid = default_bandwidth_grid(obs)
    assert grid.shape == (20,)
    scale = np.std(obs) * 200 ** (-1 / 5)
    assert grid[0] == pytest.approx(0.05 * scale)
    assert grid[-1] == pytest.approx(2.0 * scale)
    assert np.all(np.diff(grid) > 0)


def test_kernel_emission_validation():
    with pytest.raises(InputError):
        KernelEmission(
            anchors=np.arange(3.0), bandwidth=1.0,
            weights=np.full((3, 1), 0.5),
        )
    with pytest.raises(InputError):
        KernelEmission(
            anchors=np.arange(3.0), bandwidth=-1.0,
            weights=np.full((3, 1), 1 / 3),
        )
