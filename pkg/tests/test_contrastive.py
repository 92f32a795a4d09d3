import numpy as np
import pytest

from motionmil.contrastive import (
    EmbeddingBatch,
    NceGrads,
    ZeroVector,
    batch_from_dict,
    batch_to_dict,
    nce_backward,
    nce_loss,
    similarity_matrix,
)
from motionmil.gradcheck import contrastive_suite, finite_difference

from oracles import nce_loss_oracle, similarity_oracle


def _random_batch(rng, b=None, dim=None, rho=None):
    b = b or int(rng.integers(1, 7))
    dim = dim or int(rng.integers(2, 17))
    rho = rho if rho is not None else float(rng.uniform(0.2, 3.0))
    return EmbeddingBatch(
        img_proj=rng.normal(0, 1, (b, dim)),
        mot_proj=rng.normal(0, 1, (b, dim)),
        rho=rho,
    )


class TestSimilarityMatrix:
    def test_identical_unit_vectors(self):
        e = np.eye(3)
        batch = EmbeddingBatch(img_proj=e, mot_proj=e, rho=1.0)
        np.testing.assert_allclose(np.diag(similarity_matrix(batch)), 1.0)

    def test_orthogonal_pair(self):
        batch = EmbeddingBatch(
            img_proj=np.array([[1.0, 0.0]]), mot_proj=np.array([[0.0, 2.0]]), rho=0.5
        )
        np.testing.assert_allclose(similarity_matrix(batch), [[0.0]], atol=1e-15)

    def test_matches_scalar_oracle(self, rng):
        for _ in range(20):
            batch = _random_batch(rng)
            expected = similarity_oracle(
                batch.img_proj.tolist(), batch.mot_proj.tolist(), batch.rho
            )
            np.testing.assert_allclose(similarity_matrix(batch), expected, atol=1e-10)

    def test_entries_bounded_by_inverse_rho(self, rng):
        for _ in range(20):
            batch = _random_batch(rng)
            s = similarity_matrix(batch)
            assert (np.abs(s) <= 1.0 / batch.rho + 1e-12).all()

    def test_zero_vector_rejected(self):
        batch = EmbeddingBatch(
            img_proj=np.array([[0.0, 0.0]]), mot_proj=np.array([[1.0, 0.0]]), rho=1.0
        )
        with pytest.raises(ZeroVector):
            similarity_matrix(batch)


class TestNceLoss:
    def test_single_pair_is_zero(self, rng):
        batch = _random_batch(rng, b=1)
        assert nce_loss(batch) == 0.0

    @pytest.mark.parametrize("b", [2, 4, 8])
    def test_identical_embeddings_give_log_b(self, rng, b):
        row = rng.normal(0, 1, (1, 8))
        same = np.tile(row, (b, 1))
        for rho in (0.3, 1.0, 5.0):
            loss = nce_loss(EmbeddingBatch(img_proj=same, mot_proj=same, rho=rho))
            np.testing.assert_allclose(loss, np.log(b), atol=1e-10)

    def test_matches_explicit_oracle(self, rng):
        for _ in range(20):
            batch = _random_batch(rng, b=4)
            expected = nce_loss_oracle(
                batch.img_proj.tolist(), batch.mot_proj.tolist(), batch.rho
            )
            np.testing.assert_allclose(nce_loss(batch), expected, atol=1e-10)

    def test_nonnegative(self, rng):
        for _ in range(30):
            assert nce_loss(_random_batch(rng)) >= 0.0

    def test_high_temperature_limit(self, rng):
        batch = _random_batch(rng, b=5, rho=1e6)
        np.testing.assert_allclose(nce_loss(batch), np.log(5), atol=1e-4)

    def test_row_scale_invariance(self, rng):
        for _ in range(20):
            batch = _random_batch(rng, b=4)
            scaled_img = batch.img_proj.copy()
            scaled_img[2] *= float(rng.uniform(0.1, 40.0))
            scaled = EmbeddingBatch(img_proj=scaled_img, mot_proj=batch.mot_proj,
                                    rho=batch.rho)
            np.testing.assert_allclose(nce_loss(scaled), nce_loss(batch), atol=1e-10)
            np.testing.assert_allclose(similarity_matrix(scaled),
                                       similarity_matrix(batch), atol=1e-10)

    def test_permutation_equivariance(self, rng):
        batch = _random_batch(rng, b=6)
        perm = rng.permutation(6)
        permuted = EmbeddingBatch(img_proj=batch.img_proj[perm],
                                  mot_proj=batch.mot_proj[perm], rho=batch.rho)
        np.testing.assert_allclose(nce_loss(permuted), nce_loss(batch), atol=1e-10)

    def test_direction_swap_symmetry(self, rng):
        for _ in range(20):
            batch = _random_batch(rng)
            swapped = EmbeddingBatch(img_proj=batch.mot_proj, mot_proj=batch.img_proj,
                                     rho=batch.rho)
            np.testing.assert_allclose(nce_loss(swapped), nce_loss(batch), atol=1e-10)


class TestNceBackward:
    def test_gradcheck_suite(self):
        for row in contrastive_suite(instances=24, seed=5):
            assert row.passed, f"{row.name}: {row.max_rel_error}"

    def test_rho_gradient_at_identical_batch(self, rng):
        same = np.tile(rng.normal(0, 1, (1, 6)), (4, 1))
        batch = EmbeddingBatch(img_proj=same, mot_proj=same.copy(), rho=0.8)
        grads = nce_backward(batch)
        fd = finite_difference(
            lambda x: nce_loss(EmbeddingBatch(img_proj=same, mot_proj=same.copy(),
                                              rho=float(x[0]))),
            np.array([0.8]),
        )
        # the loss is constant in rho here, so both sides vanish
        np.testing.assert_allclose(grads.rho, 0.0, atol=1e-10)
        np.testing.assert_allclose(fd, 0.0, atol=1e-8)

    def test_row_gradient_orthogonal_to_row(self, rng):
        for _ in range(20):
            batch = _random_batch(rng, b=5)
            grads = nce_backward(batch)
            for a in range(5):
                assert abs(grads.img_proj[a] @ batch.img_proj[a]) < 1e-8
                assert abs(grads.mot_proj[a] @ batch.mot_proj[a]) < 1e-8

    def test_zero_vector_propagates(self):
        batch = EmbeddingBatch(img_proj=np.array([[1.0, 0.0], [0.0, 0.0]]),
                               mot_proj=np.ones((2, 2)), rho=1.0)
        with pytest.raises(ZeroVector):
            nce_backward(batch)
        with pytest.raises(ZeroVector):
            nce_loss(batch)

    def test_grads_finite(self, rng):
        grads = nce_backward(_random_batch(rng, b=6, dim=12))
        assert isinstance(grads, NceGrads)
        assert np.isfinite(grads.img_proj).all()
        assert np.isfinite(grads.mot_proj).all()
        assert np.isfinite(grads.rho)


def test_batch_json_round_trip(rng):
    batch = _random_batch(rng, b=3, dim=5)
    back = batch_from_dict(batch_to_dict(batch))
    np.testing.assert_array_equal(back.img_proj, batch.img_proj)
    np.testing.assert_array_equal(back.mot_proj, batch.mot_proj)
    assert back.rho == batch.rho
