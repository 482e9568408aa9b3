import math
import random

import numpy as np
import pytest
import torch

from emoalign.alignment import (
    LabelProjector,
    ProjectorConfig,
    TextProjector,
    alignment_matrix,
    contrastive_sigmoid_loss,
    loss_gradient,
    project_label,
    project_text,
)
from emoalign.embedding import TokenStates
from emoalign.errors import ProjectionError, ShapeError


def two_pass_loss_oracle(M, Y):
    """Independent reference: collect per-pair log-probabilities, average the
    positive and negative lists separately, negate, and add."""
    def sigmoid(x):
        return 1.0 / (1.0 + math.exp(-x))

    positives, negatives = [], []
    for m, y in zip(np.asarray(M, dtype=np.float64).ravel(), np.asarray(Y).ravel()):
        if y == 1:
            positives.append(math.log(sigmoid(m)))
        else:
            negatives.append(math.log(1.0 - sigmoid(m)))
    pos_mean = sum(positives) / len(positives) if positives else 0.0
    neg_mean = sum(negatives) / len(negatives) if negatives else 0.0
    return -pos_mean - neg_mean


def random_pair(rng, max_side=8, scale=8.0, mode="mixed"):
    b = rng.integers(1, max_side + 1)
    n = rng.integers(1, max_side + 1)
    M = rng.uniform(-scale, scale, size=(b, n))
    if mode == "all_pos":
        Y = np.ones((b, n))
    elif mode == "all_neg":
        Y = np.zeros((b, n))
    else:
        Y = (rng.uniform(size=(b, n)) < 0.5).astype(np.float64)
    return M, Y


class TestProjectorConfig:
    @pytest.mark.parametrize("kwargs", [
        {"emotion_dim": 0}, {"n_queries": 0}, {"temperature": 0.0}, {"temperature": -1.0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ProjectorConfig(**kwargs)

    def test_defaults(self):
        config = ProjectorConfig()
        assert config.emotion_dim == 768
        assert config.temperature == 0.1


class TestTextProjector:
    def make(self, hidden=6, dim=4, queries=3, seed=0):
        return TextProjector(hidden, ProjectorConfig(emotion_dim=dim, n_queries=queries, seed=seed))

    def test_unit_norm_and_shape(self):
        projector = self.make()
        states = TokenStates(states=torch.randn(5, 6), mask=torch.ones(5, dtype=torch.bool))
        out = project_text(states, projector)
        assert out.shape == (4,)
        assert abs(float(out.norm()) - 1.0) <= 1e-6

    def test_masked_padding_row_is_ignored(self):
        projector = self.make()
        states = torch.randn(4, 6)
        base = projector(states, torch.ones(4, dtype=torch.bool))
        padded = torch.cat([states, torch.randn(2, 6)], dim=0)
        mask = torch.tensor([True, True, True, True, False, False])
        # identical up to float32 reduction-order rounding
        assert torch.allclose(projector(padded, mask), base, atol=1e-6)

    def test_batched_matches_single(self):
        projector = self.make()
        states = torch.randn(2, 5, 6)
        mask = torch.ones(2, 5, dtype=torch.bool)
        batched = projector(states, mask)
        single = projector(states[1], mask[1])
        assert torch.allclose(batched[1], single, atol=1e-6)

    def test_norm_floor_raises(self):
        projector = self.make()
        with torch.no_grad():
            projector.to_space.weight.zero_()
            projector.to_space.bias.zero_()
        states = TokenStates(states=torch.randn(3, 6), mask=torch.ones(3, dtype=torch.bool))
        with pytest.raises(ProjectionError):
            project_text(states, projector)


class TestLabelProjector:
    def test_shape_and_determinism(self):
        projector = LabelProjector(8, ProjectorConfig(emotion_dim=4, seed=1))
        vec = torch.randn(8)
        out = project_label(vec, projector)
        assert out.shape == (4,)
        assert torch.equal(out, project_label(vec, projector))

    def test_homogeneity_zero_bias(self):
        projector = LabelProjector(8, ProjectorConfig(emotion_dim=4, seed=2))
        vec = torch.randn(8)
        assert torch.equal(project_label(vec, projector), project_label(2.0 * vec, projector))


class TestAlignmentMatrix:
    def test_identical_and_orthogonal(self):
        M = alignment_matrix(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]), 0.1)
        assert M.tolist() == [[10.0, 0.0]]

    def test_antipodal(self):
        M = alignment_matrix(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]]), 0.1)
        assert M.tolist() == [[-10.0]]

    def test_cosine_one_with_half_temperature(self):
        M = alignment_matrix(np.array([[0.6, 0.8]]), np.array([[0.6, 0.8]]), 0.5)
        assert M.tolist() == [[2.0]]

    def test_rejects_non_unit_rows(self):
        with pytest.raises(ValueError, match="unit-norm"):
            alignment_matrix(np.array([[1.1, 0.0]]), np.array([[1.0, 0.0]]), 0.1)
        with pytest.raises(ValueError, match="unit-norm"):
            alignment_matrix(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]), 0.1)

    def test_tolerates_float32_normalization_error(self):
        # deviation 5e-5 is inside the 1e-4 gate
        row = np.array([[1.0, 0.01]]) / np.sqrt(1.0001)
        loose = np.array([[1.00005, 0.0]])
        assert alignment_matrix(row, loose, 0.1).shape == (1, 1)

    def test_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            alignment_matrix(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]), 0.0)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ShapeError):
            alignment_matrix(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0, 0.0]]), 0.1)

    def test_entries_bounded_despite_rounding(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            T = rng.standard_normal((4, 3)).astype(np.float32)
            T /= np.linalg.norm(T, axis=1, keepdims=True)
            M = alignment_matrix(T, T, 0.1)
            assert float(M.abs().max()) <= 10.0


class TestLoss:
    def test_single_positive_softplus_identity(self):
        loss = float(contrastive_sigmoid_loss(np.array([[10.0]]), np.array([[1.0]])))
        assert abs(loss - math.log1p(math.exp(-10.0))) <= 1e-12

    def test_balanced_zeros(self):
        loss = float(contrastive_sigmoid_loss(np.zeros((2, 2)), np.eye(2)))
        assert abs(loss - 2.0 * math.log(2.0)) <= 1e-12

    def test_one_pos_one_neg(self):
        M = np.array([[2.0, -2.0]])
        Y = np.array([[1.0, 0.0]])
        expected = two_pass_loss_oracle(M, Y)  # = 2 * -log(sigmoid(2)) ~ 0.2539
        assert abs(float(contrastive_sigmoid_loss(M, Y)) - expected) <= 1e-12
        assert expected == pytest.approx(0.253856, abs=1e-6)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(7)
        for i in range(300):
            mode = ("mixed", "all_pos", "all_neg")[i % 3]
            M, Y = random_pair(rng, mode=mode)
            ours = float(contrastive_sigmoid_loss(M, Y))
            assert abs(ours - two_pass_loss_oracle(M, Y)) <= 1e-9
            assert ours >= 0.0

    def test_empty_class_contributes_zero(self):
        all_pos = float(contrastive_sigmoid_loss(np.array([[3.0, 1.0]]), np.array([[1.0, 1.0]])))
        expected = (math.log1p(math.exp(-3.0)) + math.log1p(math.exp(-1.0))) / 2
        assert abs(all_pos - expected) <= 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            contrastive_sigmoid_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_non_binary_targets(self):
        with pytest.raises(ValueError):
            contrastive_sigmoid_loss(np.zeros((1, 2)), np.array([[0.5, 1.0]]))

    def test_numerically_stable_at_extreme_temperature(self):
        # scaled cosines at temperature 1e-3 reach +/-1000
        M = np.array([[1000.0, -1000.0]])
        for Y in (np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])):
            loss = float(contrastive_sigmoid_loss(M, Y))
            assert math.isfinite(loss)
            grad = loss_gradient(M, Y)
            assert bool(torch.isfinite(grad).all())

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            M, Y = random_pair(rng)
            base = float(contrastive_sigmoid_loss(M, Y))
            rows = rng.permutation(M.shape[0])
            cols = rng.permutation(M.shape[1])
            permuted = float(contrastive_sigmoid_loss(M[rows][:, cols], Y[rows][:, cols]))
            assert abs(base - permuted) <= 1e-12

    def test_argmax_invariant_to_temperature(self):
        rng = np.random.default_rng(4)
        cosines = rng.uniform(-1, 1, size=(10, 6))
        for tau in (0.05, 0.1, 0.7, 3.0):
            assert (np.argmax(cosines / tau, axis=1) == np.argmax(cosines / 0.1, axis=1)).all()


class TestLossGradient:
    def test_single_positive(self):
        grad = loss_gradient(np.array([[0.0]]), np.array([[1.0]]))
        assert grad.tolist() == [[-0.5]]

    def test_single_negative(self):
        grad = loss_gradient(np.array([[0.0]]), np.array([[0.0]]))
        assert grad.tolist() == [[0.5]]

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        step = 1e-3
        for i in range(60):
            mode = ("mixed", "all_pos", "all_neg")[i % 3]
            M, Y = random_pair(rng, max_side=4, mode=mode)
            analytic = loss_gradient(M, Y).numpy()
            numeric = np.zeros_like(M)
            for r in range(M.shape[0]):
                for c in range(M.shape[1]):
                    up, down = M.copy(), M.copy()
                    up[r, c] += step
                    down[r, c] -= step
                    numeric[r, c] = (
                        float(contrastive_sigmoid_loss(up, Y))
                        - float(contrastive_sigmoid_loss(down, Y))
                    ) / (2 * step)
            denom = np.maximum(np.abs(numeric), 1e-8)
            assert (np.abs(analytic - numeric) / denom).max() <= 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            loss_gradient(np.zeros((1, 2)), np.zeros((2, 2)))


class TestEndToEndGradient:
    def test_projector_parameter_gradients_match_finite_differences(self):
        """Backprop through both projectors against central differences, on a
        tiny double-precision model (hidden 4, emotion dim 2, one query)."""
        torch.manual_seed(0)
        config = ProjectorConfig(emotion_dim=2, n_queries=1, temperature=0.1, seed=0)
        text_projector = TextProjector(4, config).double()
        label_projector = LabelProjector(4, config).double()
        with torch.no_grad():  # healthy parameter scale keeps the FD well conditioned
            for module in (text_projector, label_projector):
                for param in module.parameters():
                    param.copy_(torch.randn(param.shape, dtype=torch.float64) * 0.5)
        states = torch.randn(3, 5, 4, dtype=torch.float64)
        mask = torch.ones(3, 5, dtype=torch.bool)
        mask[1, 3:] = False
        pooled_labels = torch.randn(2, 4, dtype=torch.float64)
        targets = torch.tensor([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=torch.float64)

        def compute_loss():
            T = text_projector(states, mask)
            L = label_projector(pooled_labels)
            return contrastive_sigmoid_loss(alignment_matrix(T, L, config.temperature), targets)

        loss = compute_loss()
        loss.backward()

        step = 1e-6
        for module in (text_projector, label_projector):
            for name, param in module.named_parameters():
                analytic = param.grad.detach().numpy().ravel()
                numeric = np.zeros_like(analytic)
                flat = param.data.view(-1)
                for idx in range(flat.numel()):
                    original = float(flat[idx])
                    flat[idx] = original + step
                    up = float(compute_loss())
                    flat[idx] = original - step
                    down = float(compute_loss())
                    flat[idx] = original
                    numeric[idx] = (up - down) / (2 * step)
                err = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
                assert err <= 1e-3, f"{name}: rel err {err:.2e}"
