import numpy as np
import pytest

from ipsim.project import pca_project, projection_csv
from reference import pca_reference


def test_projection_matches_reference():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((40, 8))
    got = pca_project(x, k=2)
    np.testing.assert_allclose(got.coords, pca_reference(x, k=2), rtol=0, atol=1e-9)
    # Explained fractions from singular values, an independent route.
    centered = x - x.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    np.testing.assert_allclose(got.explained, (s**2 / (s**2).sum())[:2],
                               rtol=0, atol=1e-12)


def test_projection_deterministic_sign():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((25, 5))
    a = pca_project(x, k=2)
    b = pca_project(x.copy(), k=2)
    np.testing.assert_array_equal(a.coords, b.coords)
    for row in a.components:
        assert row[np.argmax(np.abs(row))] > 0
        assert np.linalg.norm(row) == pytest.approx(1.0, abs=1e-12)


def test_projection_recovers_planted_axis():
    # Points along one dominant axis: the first component captures
    # almost all variance and aligns with that axis.
    rng = np.random.default_rng(0)
    t = rng.standard_normal(200)
    axis = np.array([3.0, 4.0, 0.0]) / 5.0
    x = np.outer(t, axis) * 10.0 + rng.standard_normal((200, 3)) * 0.01
    proj = pca_project(x, k=2)
    assert proj.explained[0] > 0.999
    assert abs(np.dot(proj.components[0], axis)) == pytest.approx(1.0, abs=1e-4)


def test_explained_fractions_sum_below_one():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((30, 6))
    proj = pca_project(x, k=2)
    assert proj.explained.shape == (2,)
    assert proj.explained[0] >= proj.explained[1] >= 0.0
    assert proj.explained.sum() <= 1.0 + 1e-12


def test_projection_centers_data():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((20, 4)) + 100.0
    proj = pca_project(x, k=2)
    np.testing.assert_allclose(proj.coords.mean(axis=0), 0.0, atol=1e-9)


def test_projection_input_validation():
    with pytest.raises(ValueError):
        pca_project(np.ones(5))
    with pytest.raises(ValueError):
        pca_project(np.ones((1, 5)))


def test_k_clipped_to_dimension():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((10, 2))
    proj = pca_project(x, k=5)
    assert proj.coords.shape == (10, 2)
    assert proj.components.shape == (2, 2)


def test_projection_csv_layout():
    coords = np.array([[1.5, -2.25], [0.0, 3.0]])
    text = projection_csv(["d1", "d2"], ["famA", "famB"], coords)
    lines = text.splitlines()
    assert lines[0] == "name,family,x,y"
    assert lines[1] == "d1,famA,1.5,-2.25"
    assert lines[2] == "d2,famB,0,3"
    assert text.endswith("\n")
