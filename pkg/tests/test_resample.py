import numpy as np
import pytest
from scipy.spatial import cKDTree

from manifold_mls.errors import ValidationError
from manifold_mls.mmls import MMLSConfig
from manifold_mls.resample import ResampleConfig, ResampleError, estimate_sigma, grid_nodes, resample
from manifold_mls.synthetic import sample_sphere
from manifold_mls.weights import WeightProfile


def test_sigma_on_line_grid():
    s = 0.1
    pts = np.arange(50)[:, None] * s
    # endpoints also have a neighbor at distance s
    assert estimate_sigma(pts, d=1, k=1, seed=0) == pytest.approx(s)


def test_sigma_matches_knn_scan():
    pts, _ = sample_sphere(2, 3, 1.0, 300, 1)
    sigma = estimate_sigma(pts, d=2, k=3, seed=5)
    picks = np.random.default_rng(5).integers(300, size=100)
    brute = max(np.sort(np.linalg.norm(pts - pts[i], axis=1))[9] for i in picks)
    assert sigma == brute


def test_sigma_minimal_cloud(rng):
    pts = rng.normal(size=(10, 3))
    picks = np.random.default_rng(2).integers(10, size=100)
    expected = max(np.linalg.norm(pts - pts[i], axis=1).max() for i in picks)
    assert estimate_sigma(pts, d=2, k=3, seed=2) == pytest.approx(expected)
    with pytest.raises(ValidationError):
        estimate_sigma(pts[:9], d=2, k=3, seed=2)


def test_grid_nodes():
    g = grid_nodes(3, 2, 1.0)
    assert g.shape == (9, 2)
    assert g[0].tolist() == [-1.0, -1.0] and g[1].tolist() == [-1.0, 0.0] and g[-1].tolist() == [1.0, 1.0]
    assert grid_nodes(1, 3, 0.5).tolist() == [[0.0, 0.0, 0.0]]


def test_single_node_interpolatory_returns_samples():
    pts, _ = sample_sphere(2, 3, 1.0, 300, 7, center=np.zeros(3), frame=np.eye(3))
    cfg = MMLSConfig(d=2, k=3, h=0.25, step2_profile=WeightProfile(shape="interp"))
    out = resample(pts, ResampleConfig(mmls=cfg, K=1))
    assert len(out) == len(pts)
    np.testing.assert_allclose(out.points, pts, atol=1e-6)


@pytest.mark.parametrize("K", [2, 3, 4])
def test_flat_outputs_stay_on_plane(K, rng):
    B = np.linalg.qr(rng.normal(size=(4, 2)))[0].T
    o = rng.normal(size=4)
    g = np.linspace(0, 1, 10)
    pts = o + np.array([(a, b) for a in g for b in g]) @ B
    cfg = MMLSConfig(d=2, k=2, h=0.12)
    out = resample(pts, ResampleConfig(mmls=cfg, K=K, skip_failures=True))
    assert len(out) + out.meta["dropped"] == K ** 2 * len(pts)
    resid = (out.points - o) - ((out.points - o) @ B.T) @ B
    assert np.abs(resid).max() <= 1e-9


def test_sphere_densification_and_provenance():
    pts, _ = sample_sphere(2, 3, 1.0, 400, 9, center=np.zeros(3), frame=np.eye(3))
    ref, _ = sample_sphere(2, 3, 1.0, 20000, 10, center=np.zeros(3), frame=np.eye(3))
    h = cKDTree(pts).query(ref)[0].max()
    cfg = ResampleConfig(mmls=MMLSConfig(d=2, k=3, h=h), K=5, skip_failures=True)
    out = resample(pts, cfg)
    assert len(out) + out.meta["dropped"] == 25 * 400
    assert out.meta["dropped"] < 0.01 * 25 * 400
    err = np.abs(np.linalg.norm(out.points, axis=1) - 1)
    assert err.max() < 2 * h ** 3
    # provenance: every output is near its source sample
    gap = np.linalg.norm(out.points - pts[out.source_index], axis=1)
    assert np.all(gap <= cfg.mmls.mu + out.meta["sigma"] * np.sqrt(2))
    # flattened output index i * K^d + j is strictly increasing
    assert np.all(np.diff(out.source_index * 25 + out.grid_index) > 0)


def test_deterministic():
    pts, _ = sample_sphere(2, 5, 0.5, 150, 4)
    cfg = ResampleConfig(mmls=MMLSConfig(d=2, k=2, h=0.12), K=3, seed=8, skip_failures=True)
    a, b = resample(pts, cfg), resample(pts, cfg)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.source_index, b.source_index)


def test_failure_identifies_node():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    cfg = ResampleConfig(mmls=MMLSConfig(d=1, k=2, h=0.2), K=3, sigma=5.0)
    with pytest.raises(ResampleError, match="sample 0, grid node") as info:
        resample(pts, cfg)
    assert info.value.source == 0


def test_config_validation():
    with pytest.raises(ValidationError):
        ResampleConfig(mmls=MMLSConfig(d=1, k=2, h=0.1), K=0)
    with pytest.raises(ValidationError):
        ResampleConfig(mmls=MMLSConfig(d=1, k=2, h=0.1), sigma=0.0)
