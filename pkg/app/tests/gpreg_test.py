import numpy as np
import pytest
from scipy import stats

from core.errors import ValidationError
from gpreg import (
    LandmarkObservation,
    anisotropic_noise,
    log_density,
    posterior_mean_mesh,
    regress,
    regress_at_vertices,
    sample,
)
from mesh import tangent_frame, vertex_normals
from shapemodel import GaussianKernel, build_low_rank


@pytest.fixture
def square_model(flat_square):
    kernel = GaussianKernel(scale=2.0, bandwidth=1.5)
    return kernel, build_low_rank(kernel, flat_square, rank=3 * flat_square.n_vertices)


def test_full_rank_matches_dense_regression(square_model):
    """Тест: регрессия полного ранга совпадает с классической GP-регрессией"""
    kernel, model = square_model
    vertices = model.reference.vertices
    ids = np.array([0, 2])
    observed = np.array([[0.3, -0.2, 0.5], [0.1, 0.4, -0.3]])
    sigma2 = 0.5

    posterior = regress_at_vertices(model, ids, observed, sigma2)

    full = kernel.matrix(vertices)
    rows = (3 * ids[:, None] + np.arange(3)).ravel()
    k_oo = full[np.ix_(rows, rows)] + sigma2 * np.eye(len(rows))
    k_ao = full[:, rows]
    mean = k_ao @ np.linalg.solve(k_oo, observed.ravel())
    cov = full - k_ao @ np.linalg.solve(k_oo, k_ao.T)

    np.testing.assert_allclose(posterior.predictive_mean().ravel(), mean, atol=1e-8)
    np.testing.assert_allclose(posterior.predictive_covariance(), cov, atol=1e-8)
    print("✅ Совпадение с плотной GP-регрессией")


def test_posterior_contracts(small_model):
    """Тест: апостериорная дисперсия в вершинах не больше априорной"""
    ids = np.arange(0, small_model.n_vertices, 5)
    posterior = regress_at_vertices(small_model, ids, np.ones((len(ids), 3)), 0.1)
    phi = small_model.scaled_basis().reshape(-1, small_model.rank)
    prior_var = np.einsum("ir,ir->i", phi, phi)
    post_var = np.diag(posterior.predictive_covariance())
    assert np.all(post_var <= prior_var + 1e-10)
    assert post_var.sum() < prior_var.sum()
    print(f"✅ След ковариации: {prior_var.sum():.3f} -> {post_var.sum():.3f}")


def test_anisotropic_noise_frame():
    """Тест анизотропного шума: дисперсия σ_n² вдоль нормали"""
    blocks = anisotropic_noise(np.array([[0.0, 0.0, 1.0]]), sigma_n2=3.0, sigma_v2=100.0)
    np.testing.assert_allclose(blocks[0], np.diag([100.0, 100.0, 3.0]), atol=1e-10)

    normal = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
    block = anisotropic_noise(normal[None], sigma_n2=2.0, sigma_v2=7.0)[0]
    assert normal @ block @ normal == pytest.approx(2.0)
    np.testing.assert_allclose(np.linalg.eigvalsh(block), [2.0, 7.0, 7.0])
    with pytest.raises(ValidationError):
        anisotropic_noise(normal[None], sigma_n2=0.0, sigma_v2=1.0)
    print("✅ Анизотропный шум")


def test_landmark_regression_matches_vertex_regression(small_model):
    """Тест: регрессия по наблюдениям совпадает с регрессией по вершинам"""
    reference = small_model.reference.vertices
    ids = np.array([1, 7, 20])
    observed = np.array([[0.5, 0.0, 0.0], [0.0, -0.5, 0.2], [0.1, 0.1, 0.1]])
    observations = [
        LandmarkObservation(reference[i], u, 0.2 * np.eye(3)) for i, u in zip(ids, observed)
    ]
    by_landmarks = regress(small_model, observations)
    by_vertices = regress_at_vertices(small_model, ids, observed, 0.2)
    np.testing.assert_allclose(by_landmarks.mean, by_vertices.mean)
    np.testing.assert_allclose(by_landmarks.covariance, by_vertices.covariance)

    mesh = posterior_mean_mesh(by_landmarks)
    np.testing.assert_allclose(mesh.vertices, reference + by_landmarks.predictive_mean())
    print("✅ Наблюдения в вершинах")


def test_regression_invalid_inputs(small_model):
    """Тест некорректных наблюдений"""
    reference = small_model.reference.vertices
    with pytest.raises(ValidationError):
        regress(small_model, [])
    with pytest.raises(ValidationError):
        regress(small_model, [LandmarkObservation(reference[0] + 0.5, np.zeros(3), np.eye(3))])
    with pytest.raises(ValidationError):
        regress(small_model, [LandmarkObservation(reference[0], np.zeros(3), np.zeros((3, 3)))])
    with pytest.raises(ValidationError):
        LandmarkObservation(reference[0], np.zeros(3), np.array([[1.0, 0.5, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(ValidationError):
        regress_at_vertices(small_model, [small_model.n_vertices], np.zeros((1, 3)), 1.0)
    print("✅ Некорректные наблюдения отклонены")


def test_log_density_matches_scipy(small_model, rng):
    """Тест логарифма плотности против scipy.stats"""
    ids = np.arange(0, small_model.n_vertices, 7)
    posterior = regress_at_vertices(small_model, ids, rng.normal(size=(len(ids), 3)), 0.5)
    oracle = stats.multivariate_normal(posterior.mean, posterior.covariance)
    points = posterior.mean + rng.normal(scale=0.1, size=(5, small_model.rank))
    batch = posterior.log_density(points)
    np.testing.assert_allclose(batch, oracle.logpdf(points), rtol=1e-6)
    assert log_density(posterior, points[0]) == pytest.approx(oracle.logpdf(points[0]), rel=1e-6)
    print("✅ Плотность совпадает с scipy")


def test_posterior_samples_moments(small_model):
    """Тест выборочных моментов апостериорных выборок"""
    ids = np.arange(0, small_model.n_vertices, 4)
    posterior = regress_at_vertices(small_model, ids, np.full((len(ids), 3), 0.3), 1.0)
    rng = np.random.default_rng(7)
    draws = np.array([sample(posterior, rng) for _ in range(20000)])
    np.testing.assert_allclose(draws.mean(axis=0), posterior.mean, atol=0.05)
    np.testing.assert_allclose(np.cov(draws.T), posterior.covariance, atol=0.05)
    print("✅ Моменты выборок совпадают")


def test_more_observations_never_widen_posterior(small_model, rng):
    """Тест: вложенные наборы наблюдений уменьшают след ковариации"""
    order = rng.permutation(small_model.n_vertices)
    deformation = rng.normal(scale=0.5, size=(small_model.n_vertices, 3))
    traces = []
    for size in (3, 10, 25, small_model.n_vertices):
        ids = np.sort(order[:size])
        posterior = regress_at_vertices(small_model, ids, deformation[ids], 0.3)
        traces.append(np.trace(posterior.covariance))
    assert np.all(np.diff(traces) <= 1e-10)
    assert traces[0] < small_model.rank
    print(f"✅ След ковариации: {[round(t, 3) for t in traces]}")


def test_anisotropic_observation_shrinks_along_normal(small_model):
    """Тест: одно наблюдение с малым шумом вдоль нормали сужает дисперсию вдоль нормали"""
    vertex = 10
    normal = vertex_normals(small_model.reference).normals[vertex]
    v1, v2 = tangent_frame(normal)
    noise = anisotropic_noise(normal[None], sigma_n2=0.01, sigma_v2=100.0)
    posterior = regress_at_vertices(small_model, [vertex], np.zeros((1, 3)), noise)

    phi = small_model.scaled_basis([vertex])[0]
    reduction = phi @ phi.T - posterior.predictive_covariance([vertex])
    along_normal = normal @ reduction @ normal
    for tangent in (v1, v2):
        assert along_normal > 10.0 * (tangent @ reduction @ tangent)
    print(f"✅ Сужение вдоль нормали {along_normal:.4f}")


def test_huge_noise_recovers_prior(small_model, rng):
    """Тест: при огромном шуме апостериорное распределение равно априорному"""
    ids = np.arange(small_model.n_vertices)
    observed = rng.normal(size=(len(ids), 3))
    posterior = regress_at_vertices(small_model, ids, observed, 1e12)
    np.testing.assert_allclose(posterior.mean, 0.0, atol=1e-8)
    np.testing.assert_allclose(posterior.covariance, np.eye(small_model.rank), atol=1e-8)
    print("✅ Огромный шум возвращает априорное распределение")


def test_tiny_noise_interpolates(square_model, rng):
    """Тест: модель полного ранга при почти нулевом шуме проходит через наблюдения"""
    _, model = square_model
    alpha = rng.normal(size=model.rank)
    ids = np.arange(model.n_vertices)
    posterior = regress_at_vertices(model, ids, model.deformation(alpha), 1e-8 * np.eye(3))
    mesh = posterior_mean_mesh(posterior)
    assert np.abs(mesh.vertices - model.instance(alpha).vertices).max() < 1e-4
    print("✅ Интерполяция при малом шуме")
