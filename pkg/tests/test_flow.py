import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereflow.coupling import Metric
from sphereflow.errors import AntipodalPoints, DimensionMismatch, InvalidVariant, LengthMismatch
from sphereflow.flow import (
    Coupler,
    FlowVariant,
    PathBatch,
    Variant,
    make_training_batch,
    pair_batch,
    regression_loss,
    sample_path_linear,
    sample_path_spherical,
)
from sphereflow.geometry import angle_between, project_to_sphere


class TestLinearPath:
    def test_midpoint(self):
        p = sample_path_linear([0.0, 0.0], [2.0, 2.0], 0.5)
        np.testing.assert_array_equal(p.x_t, [[1.0, 1.0]])
        np.testing.assert_array_equal(p.u_t, [[2.0, 2.0]])

    def test_start(self):
        x0 = np.random.default_rng(0).standard_normal((5, 3))
        np.testing.assert_array_equal(sample_path_linear(x0, x0 + 1, 0.0).x_t, x0)

    def test_telescoping(self):
        rng = np.random.default_rng(1)
        x0, x1, t = rng.standard_normal((50, 4)), rng.standard_normal((50, 4)), rng.uniform(size=50)
        p = sample_path_linear(x0, x1, t)
        np.testing.assert_allclose(p.x_t + (1 - t)[:, None] * p.u_t, x1, rtol=0, atol=1e-12)
        np.testing.assert_allclose(x0 + p.u_t, x1, rtol=0, atol=1e-12)

    def test_velocity_independent_of_t(self):
        rng = np.random.default_rng(2)
        x0, x1 = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
        np.testing.assert_array_equal(sample_path_linear(x0, x1, 0.1).u_t, sample_path_linear(x0, x1, 0.9).u_t)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sample_path_linear([1.0, 2.0], [1.0, 2.0, 3.0], 0.5)


class TestSphericalPath:
    def test_quarter_arc_start(self):
        p = sample_path_spherical([1.0, 0.0], [0.0, 1.0], 0.0)
        np.testing.assert_allclose(p.x_t, [[1.0, 0.0]], atol=1e-15)
        np.testing.assert_allclose(p.u_t, [[0.0, math.pi / 2]], atol=1e-15)

    def test_constant_speed(self):
        rng = np.random.default_rng(3)
        x0 = project_to_sphere(rng.standard_normal((200, 8)), 5.0)
        x1 = project_to_sphere(rng.standard_normal((200, 8)), 5.0)
        p = sample_path_spherical(x0, x1, rng.uniform(size=200), 5.0)
        theta = angle_between(x0, x1)
        np.testing.assert_allclose(np.linalg.norm(p.u_t, axis=1), 5.0 * theta, rtol=1e-8)

    def test_tiny_angle_matches_chord(self):
        x0 = np.array([1.0, 0.0, 0.0])
        x1 = np.array([math.cos(1e-6), math.sin(1e-6), 0.0])
        p = sample_path_spherical(x0, x1, 0.4)
        np.testing.assert_allclose(p.u_t[0], x1 - x0, rtol=0, atol=1e-8)

    def test_antipodal(self):
        with pytest.raises(AntipodalPoints):
            sample_path_spherical([1.0, 0.0], [-1.0, 0.0], 0.5)

    def test_radius_linearity(self):
        rng = np.random.default_rng(4)
        d0 = project_to_sphere(rng.standard_normal((100, 16)), 1.0)
        d1 = project_to_sphere(rng.standard_normal((100, 16)), 1.0)
        t = rng.uniform(size=100)
        a = sample_path_spherical(45.25 * d0, 45.25 * d1, t, 45.25)
        b = sample_path_spherical(120 * d0, 120 * d1, t, 120)
        ratio = np.linalg.norm(b.u_t, axis=1) / np.linalg.norm(a.u_t, axis=1)
        np.testing.assert_allclose(ratio, 120 / 45.25, rtol=1e-10)


class TestVariantGating:
    @pytest.mark.parametrize("src,tgt", [(False, True), (True, False), (False, False)])
    def test_sfm_requires_projection(self, src, tgt):
        with pytest.raises(InvalidVariant):
            FlowVariant(Variant.SFM, src, tgt, 1.0)

    def test_valid_variants(self):
        assert FlowVariant("sfm", True, True, 2.0).spherical
        assert FlowVariant("otcfm").metric is Metric.EUCLIDEAN_SQ
        assert FlowVariant("sotcfm", False, True).metric is Metric.ANGULAR
        assert FlowVariant("icfm").metric is None

    def test_radius_positive(self):
        with pytest.raises(InvalidVariant):
            FlowVariant("sfm", True, True, 0.0)


def batches(seed, n=16, d=5):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)), rng.standard_normal((n, d)) + 2.0


class TestTrainingBatch:
    def test_icfm_is_seeded_shuffle(self):
        src, tgt = batches(0, n=4)
        a = make_training_batch(FlowVariant("icfm"), src, tgt, Coupler(), np.random.default_rng(7))
        b = make_training_batch(FlowVariant("icfm"), src, tgt, Coupler(), np.random.default_rng(7))
        np.testing.assert_array_equal(a.x_t, b.x_t)
        np.testing.assert_array_equal(a.u_t, b.u_t)
        perm = np.random.default_rng(7).permutation(4)
        np.testing.assert_array_equal(pair_batch(FlowVariant("icfm"), src, tgt, Coupler(),
                                                 np.random.default_rng(7))[1], tgt[perm])

    @pytest.mark.parametrize("mode", ["exact", "sample"])
    def test_sotcfm_pairing_ignores_source_scale(self, mode):
        src, tgt = batches(1)
        scale = np.random.default_rng(2).uniform(0.1, 10.0, (src.shape[0], 1))
        variant = FlowVariant("sotcfm", False, False)
        coupler = Coupler(mode=mode)
        _, t_plain = pair_batch(variant, src, tgt, coupler, np.random.default_rng(3))
        _, t_scaled = pair_batch(variant, src * scale, tgt, coupler, np.random.default_rng(3))
        np.testing.assert_array_equal(t_plain, t_scaled)

    def test_otcfm_exact_is_a_permutation(self):
        src, tgt = batches(4)
        x0, x1 = pair_batch(FlowVariant("otcfm"), src, tgt, Coupler(mode="exact"), np.random.default_rng(0))
        np.testing.assert_array_equal(x0, src)
        assert sorted(map(tuple, x1)) == sorted(map(tuple, tgt))

    def test_ot_chunks_stay_within_chunk(self):
        src, tgt = batches(5, n=12)
        i, j = Coupler(mode="exact", ot_batch_size=4).pair(src, tgt, Metric.ANGULAR, np.random.default_rng(0))
        np.testing.assert_array_equal(i // 4, j // 4)

    @pytest.mark.parametrize("mode", ["exact", "sample"])
    def test_sfm_batch_invariants(self, mode):
        src, tgt = batches(6, n=64, d=16)
        variant = FlowVariant("sfm", True, True, 3.9)
        p = make_training_batch(variant, src, tgt, Coupler(mode=mode), np.random.default_rng(0))
        np.testing.assert_allclose(np.linalg.norm(p.x_t, axis=1), 3.9, rtol=1e-9)
        radial = np.sum(p.x_t * p.u_t, axis=1)
        assert np.all(np.abs(radial) <= 1e-6 * 3.9**2 * np.pi)
        assert np.all((p.t >= 0) & (p.t <= 1))

    def test_sfm_repairs_antipodal_pairs(self):
        src = np.array([[1.0, 0.0], [0.0, 1.0]])
        tgt = np.array([[-1.0, 0.0], [0.0, 1.0]])
        variant = FlowVariant("sfm", True, True, 1.0)
        p = make_training_batch(variant, src, tgt, Coupler(mode="exact"), np.random.default_rng(0), max_repair=50)
        assert np.all(np.isfinite(p.u_t))

    def test_projection_flags(self):
        src, tgt = batches(8)
        x0, x1 = pair_batch(FlowVariant("icfm", True, False, 2.0), src, tgt, Coupler(), np.random.default_rng(0))
        np.testing.assert_allclose(np.linalg.norm(x0, axis=1), 2.0, rtol=1e-12)
        assert np.ptp(np.linalg.norm(x1, axis=1)) > 0.1


class TestLoss:
    def test_zero(self):
        u = np.random.default_rng(0).standard_normal((5, 3))
        assert regression_loss(PathBatch(u, u, np.zeros(5)), u) == 0.0

    def test_unit_offset(self):
        u = np.array([[0.3, -1.0, 2.0]])
        assert regression_loss(u, u + [1.0, 0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)

    def test_recomputation(self):
        rng = np.random.default_rng(1)
        u, v = rng.standard_normal((9, 4)), rng.standard_normal((9, 4))
        expected = sum(sum((a - b) ** 2 for a, b in zip(ru, rv)) for ru, rv in zip(u, v)) / 9
        assert regression_loss(u, v) == pytest.approx(expected, rel=1e-13)

    def test_metric_agnostic(self):
        rng = np.random.default_rng(2)
        x0 = project_to_sphere(rng.standard_normal((8, 3)), 1.0)
        x1 = project_to_sphere(rng.standard_normal((8, 3)), 1.0)
        sph = sample_path_spherical(x0, x1, 0.3)
        pred = rng.standard_normal((8, 3))
        lin = PathBatch(sph.x_t, sph.u_t.copy(), sph.t)
        assert regression_loss(sph, pred) == regression_loss(lin, pred)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            regression_loss(np.zeros((3, 2)), np.zeros((2, 2)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), r=st.floats(0.1, 200.0))
def test_spherical_path_invariants(seed, r):
    rng = np.random.default_rng(seed)
    x0 = project_to_sphere(rng.standard_normal((20, 6)), r)
    x1 = project_to_sphere(rng.standard_normal((20, 6)), r)
    theta = angle_between(x0, x1)
    keep = theta < math.pi - 1e-3
    p = sample_path_spherical(x0[keep], x1[keep], rng.uniform(size=keep.sum()), r)
    np.testing.assert_allclose(np.linalg.norm(p.x_t, axis=1), r, rtol=1e-9)
    assert np.all(np.abs(np.sum(p.x_t * p.u_t, axis=1)) <= 1e-6 * r * r * np.maximum(theta[keep], 1e-300))
