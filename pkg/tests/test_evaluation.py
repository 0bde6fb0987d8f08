import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereflow.errors import DimensionMismatch, EmptyBatch
from sphereflow.evaluation import energy_distance, on_sphere_residual, projection_sweep, write_csv
from sphereflow.geometry import project_to_sphere


def loop_energy_distance(a, b):
    """Row-by-row estimator with compensated summation; no shared code with the library."""

    def mean_dist(x, y):
        total = math.fsum(math.fsum(np.sqrt(((y - row) ** 2).sum(axis=1))) for row in x)
        return total / (len(x) * len(y))

    return 2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b)


def two_gaussians(seed, n=4000):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 2)), rng.standard_normal((n, 2)) + [2.0, 0.0]


class TestEnergyDistance:
    def test_identical_multisets(self):
        a = np.random.default_rng(0).standard_normal((50, 3))
        assert energy_distance(a, a[::-1]) <= 1e-12

    def test_symmetric(self):
        a, b = two_gaussians(1, 300)
        assert energy_distance(a, b) == energy_distance(b, a)

    def test_matches_loop_estimator(self):
        a, b = two_gaussians(2)
        assert energy_distance(a, b) == pytest.approx(loop_energy_distance(a, b), rel=1e-10)

    def test_stable_across_seeds(self):
        values = [energy_distance(*two_gaussians(s, 2000)) for s in range(3, 7)]
        mid = np.median(values)
        assert all(abs(v / mid - 1) <= 0.1 for v in values)

    def test_separated_sets_are_positive(self):
        a, b = two_gaussians(8, 200)
        assert energy_distance(a, b) > 0.5

    def test_errors(self):
        with pytest.raises(EmptyBatch):
            energy_distance(np.zeros((0, 2)), np.ones((3, 2)))
        with pytest.raises(DimensionMismatch):
            energy_distance(np.ones((2, 2)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30), m=st.integers(1, 30))
def test_energy_distance_nonnegative(seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, 3)), rng.standard_normal((m, 3))
    assert energy_distance(a, b) >= 0


class TestProjectionSweep:
    def test_on_sphere(self):
        x = project_to_sphere(np.random.default_rng(0).standard_normal((10, 4)), 2.0)
        assert projection_sweep(x, [2.0])[0].distortion <= 1e-28

    def test_single_vector(self):
        assert projection_sweep([[3.0, 4.0]], [3.0])[0].distortion == pytest.approx(4.0, abs=1e-14)

    def test_gaussian_minimum_at_mean_norm(self):
        x = np.random.default_rng(1).standard_normal((2000, 2048))
        mean = np.linalg.norm(x, axis=1).mean()
        radii = np.linspace(44.0, 46.5, 51)
        rows = projection_sweep(x, radii)
        best = radii[int(np.argmin([r.distortion for r in rows]))]
        assert abs(best - mean) <= radii[1] - radii[0]

    def test_matches_closed_form(self):
        x = np.random.default_rng(2).standard_normal((100, 5)) * 3
        s = np.linalg.norm(x, axis=1)
        for row in projection_sweep(x, [0.5, 2.0, 7.0]):
            assert row.distortion == pytest.approx(np.mean((s - row.radius) ** 2), rel=1e-12)

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            projection_sweep(np.ones((2, 2)), [0.0])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), spread=st.floats(0.05, 1.0))
def test_sweep_convex_with_argmin_at_mean(seed, spread):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((200, 8)) * np.exp(spread * rng.standard_normal((200, 1)))
    mean = np.linalg.norm(x, axis=1).mean()
    radii = np.linspace(0.5 * mean, 1.5 * mean, 50)
    d = np.array([r.distortion for r in projection_sweep(x, radii)])
    assert np.all(np.diff(d, 2) >= -1e-9 * d.max())
    assert abs(radii[np.argmin(d)] - mean) <= radii[1] - radii[0]


class TestResidual:
    def test_projected(self):
        x = project_to_sphere(np.random.default_rng(0).standard_normal((100, 16)), 45.25)
        assert on_sphere_residual(x, 45.25) <= 1e-9

    def test_double_norm(self):
        x = project_to_sphere(np.random.default_rng(1).standard_normal((10, 3)), 6.0)
        assert on_sphere_residual(x, 3.0) == pytest.approx(1.0, rel=1e-14)


def test_write_csv(tmp_path):
    write_csv(tmp_path / "out.csv", [{"radius": 0.1, "value": np.float64(1 / 3)}, {"radius": 2, "value": 4.0}])
    with open(tmp_path / "out.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0] == {"radius": "0.1", "value": repr(1 / 3)}
    assert float(rows[0]["value"]) == 1 / 3
    assert rows[1]["radius"] == "2"
