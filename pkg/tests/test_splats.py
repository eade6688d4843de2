import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatpurify.splats import (
    DegeneratePrimitiveError,
    GaussianPrimitive,
    SplatCloud,
    covariance,
    evaluate_gaussian,
    inverse_sigmoid,
    quaternion_multiply,
    quaternion_to_rotation,
    sigmoid,
)

from helpers import random_cloud


def make_prim(position=(0, 0, 0), rotation=(1, 0, 0, 0), log_scale=(0, 0, 0), opacity_logit=0.0):
    return GaussianPrimitive(
        position=np.asarray(position, dtype=np.float64),
        rotation=np.asarray(rotation, dtype=np.float64),
        log_scale=np.asarray(log_scale, dtype=np.float64),
        opacity_logit=opacity_logit,
        sh_coeffs=np.zeros((1, 3)),
    )


def random_unit_quaternion(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


class TestActivations:
    def test_neutral_storage_values(self):
        prim = make_prim()
        assert prim.opacity == pytest.approx(0.5)
        assert prim.scale == pytest.approx([1.0, 1.0, 1.0])
        assert np.allclose(quaternion_to_rotation(prim.rotation), np.eye(3))

    def test_sigmoid_logit_round_trip(self, rng):
        x = rng.uniform(-8, 8, 100)
        assert inverse_sigmoid(sigmoid(x)) == pytest.approx(x, abs=1e-9)

    def test_activated_scale_positive(self, rng):
        cloud = random_cloud(rng, 50)
        assert (cloud.scales > 0).all()
        assert ((cloud.opacities > 0) & (cloud.opacities < 1)).all()

    def test_normalized_quaternion_unit(self, rng):
        cloud = random_cloud(rng, 50)
        rots = cloud.rotation_matrices()
        eye = np.einsum("nij,nkj->nik", rots, rots)
        assert np.abs(eye - np.eye(3)).max() < 1e-6


class TestCovariance:
    def test_identity_case(self):
        assert covariance(make_prim()) == pytest.approx(np.eye(3))

    def test_diagonal_scales(self):
        # S = diag(2, 3, 4) so sigma = S S^T = diag(4, 9, 16)
        prim = make_prim(log_scale=np.log([2.0, 3.0, 4.0]))
        assert covariance(prim) == pytest.approx(np.diag([4.0, 9.0, 16.0]))

    def test_rotation_conjugation(self):
        # 90 degrees about z maps the x-axis scale onto the y-axis; verify
        # against a brute-force R diag(s^2) R^T product.
        half = np.sqrt(0.5)
        quat = np.array([half, 0.0, 0.0, half])
        prim = make_prim(rotation=quat, log_scale=[np.log(2.0), 0.0, 0.0])
        assert covariance(prim) == pytest.approx(np.diag([1.0, 4.0, 1.0]), abs=1e-12)
        rot = quaternion_to_rotation(quat)
        brute = rot @ np.diag([4.0, 1.0, 1.0]) @ rot.T
        assert covariance(prim) == pytest.approx(brute, abs=1e-12)

    def test_eigenvalues_and_determinant(self, rng):
        cloud = random_cloud(rng, 64)
        for k in range(len(cloud)):
            prim = cloud.primitive(k)
            sigma = covariance(prim)
            eigs = np.linalg.eigvalsh(sigma)
            squared = np.sort(np.exp(2 * prim.log_scale))
            assert eigs == pytest.approx(squared, rel=1e-9, abs=1e-12)
            assert np.linalg.det(sigma) == pytest.approx(np.prod(squared), rel=1e-9)

    def test_symmetric_psd(self, rng):
        sigmas = random_cloud(rng, 64).covariances()
        assert np.abs(sigmas - np.swapaxes(sigmas, 1, 2)).max() < 1e-9
        assert min(np.linalg.eigvalsh(s).min() for s in sigmas) > -1e-9


class TestEvaluateGaussian:
    def test_unit_value_at_center(self, rng):
        cloud = random_cloud(rng, 10)
        for k in range(10):
            prim = cloud.primitive(k)
            assert evaluate_gaussian(prim, prim.position) == pytest.approx(1.0)

    def test_unit_isotropic_closed_form(self):
        prim = make_prim()
        assert evaluate_gaussian(prim, [1.0, 0.0, 0.0]) == pytest.approx(np.exp(-0.5))

    def test_central_symmetry(self, rng):
        cloud = random_cloud(rng, 20)
        for k in range(20):
            prim = cloud.primitive(k)
            x = prim.position + rng.normal(0, 0.1, 3)
            mirrored = 2 * prim.position - x
            assert evaluate_gaussian(prim, x) == pytest.approx(
                evaluate_gaussian(prim, mirrored), rel=1e-12
            )

    def test_degenerate_covariance_rejected(self):
        prim = make_prim(log_scale=[0.0, 0.0, np.log(1e-7)])
        with pytest.raises(DegeneratePrimitiveError):
            evaluate_gaussian(prim, [0.0, 0.0, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_rigid_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        prim = make_prim(
            position=rng.normal(0, 2, 3),
            rotation=random_unit_quaternion(rng),
            log_scale=rng.uniform(-1.5, 0.5, 3),
        )
        x = prim.position + rng.normal(0, 1, 3)

        q_extra = random_unit_quaternion(rng)
        rot = quaternion_to_rotation(q_extra)
        shift = rng.normal(0, 3, 3)
        moved = GaussianPrimitive(
            position=rot @ prim.position + shift,
            rotation=quaternion_multiply(q_extra, prim.rotation),
            log_scale=prim.log_scale,
            opacity_logit=prim.opacity_logit,
            sh_coeffs=prim.sh_coeffs,
        )
        assert evaluate_gaussian(moved, rot @ x + shift) == pytest.approx(
            evaluate_gaussian(prim, x), rel=1e-9
        )


class TestSplatCloud:
    def test_shape_validation(self, rng):
        cloud = random_cloud(rng, 8)
        with pytest.raises(ValueError):
            SplatCloud(
                positions=cloud.positions,
                rotations=cloud.rotations[:, :3],
                log_scales=cloud.log_scales,
                opacity_logits=cloud.opacity_logits,
                sh_coeffs=cloud.sh_coeffs,
            )

    def test_sh_degree_consistency(self, rng):
        cloud = random_cloud(rng, 8, sh_degree=2)
        with pytest.raises(ValueError):
            SplatCloud(
                positions=cloud.positions,
                rotations=cloud.rotations,
                log_scales=cloud.log_scales,
                opacity_logits=cloud.opacity_logits,
                sh_coeffs=cloud.sh_coeffs,
                sh_degree=1,
            )

    def test_take_preserves_order(self, rng):
        cloud = random_cloud(rng, 20)
        sub = cloud.take([3, 7, 11])
        assert np.array_equal(sub.positions, cloud.positions[[3, 7, 11]])
        assert len(sub) == 3

    def test_primitive_round_trip(self, rng):
        cloud = random_cloud(rng, 5, sh_degree=1)
        prim = cloud.primitive(2)
        assert prim.position == pytest.approx(cloud.positions[2])
        assert prim.sh_coeffs.shape == (4, 3)
