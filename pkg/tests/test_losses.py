import math

import numpy as np
import pytest

from actionsets.core import ActionSubset, ValidationError
from actionsets.losses import (
    PROB_EPSILON,
    LossBreakdown,
    association_loss,
    combined_loss,
    loss_gradients,
    miml_loss,
    sigmoid_probs,
)


def subsets(*class_lists):
    return [ActionSubset.from_classes(cs) for cs in class_lists]


class TestSigmoidProbs:
    def test_zero_is_half(self):
        assert sigmoid_probs([0.0])[0] == 0.5

    def test_large_logit_clamped(self):
        assert sigmoid_probs([50.0])[0] == 1.0 - PROB_EPSILON
        assert sigmoid_probs([-50.0])[0] == PROB_EPSILON

    def test_ln3(self):
        assert sigmoid_probs([math.log(3.0)])[0] == pytest.approx(0.75, rel=1e-14)

    def test_matrix_shape_preserved(self):
        out = sigmoid_probs([[0.0, 1.0], [-1.0, 2.0]])
        assert out.shape == (2, 2)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            sigmoid_probs([math.nan])


class TestMimlLoss:
    def test_perfect_prediction_is_near_zero(self):
        loss = miml_loss([1.0], [[1.0 - 1e-7]])
        assert loss == pytest.approx(1e-7, rel=1e-3)

    def test_hand_computed_two_class(self):
        # bag max is [0.8, 0.4]; loss = (-ln 0.8 - ln 0.6) / 2
        loss = miml_loss([1.0, 0.0], [[0.8, 0.4], [0.6, 0.2]])
        expected = (-math.log(0.8) - math.log(0.6)) / 2.0
        assert loss == pytest.approx(expected, rel=1e-12)
        assert loss == pytest.approx(0.36698, abs=1e-5)

    def test_uninformative_half(self):
        assert miml_loss([0.0], [[0.5], [0.5]]) == pytest.approx(math.log(2.0), rel=1e-14)

    def test_empty_bag_rejected(self):
        with pytest.raises(ValidationError, match="at least one actor"):
            miml_loss([1.0], np.zeros((0, 1)))

    def test_actor_permutation_invariant(self):
        rng = np.random.default_rng(5)
        probs = rng.uniform(0.01, 0.99, size=(4, 6))
        y = (rng.uniform(size=6) < 0.5).astype(float)
        perm = rng.permutation(4)
        assert miml_loss(y, probs) == miml_loss(y, probs[perm])


class TestAssociationLoss:
    def test_hand_computed_single_actor(self):
        # target (1, 0) against probs (0.9, 0.1): both terms are -ln 0.9
        loss = association_loss(subsets([0]), [[0.9, 0.1]])
        assert loss == pytest.approx(-math.log(0.9), rel=1e-15)
        assert loss == pytest.approx(0.10536, abs=5e-6)

    def test_saturated_full_set_is_near_zero(self):
        loss = association_loss(subsets([0, 1]), [[1.0 - 1e-7, 1.0 - 1e-7]])
        assert loss == pytest.approx(2e-7 / 2.0, rel=1e-3)

    def test_two_identical_actors_double_the_loss(self):
        one = association_loss(subsets([0]), [[0.7, 0.2]])
        two = association_loss(subsets([0], [0]), [[0.7, 0.2], [0.7, 0.2]])
        assert two == 2.0 * one

    def test_empty_subset_allowed(self):
        loss = association_loss(subsets(()), [[0.5, 0.5]])
        assert loss == pytest.approx(math.log(2.0), rel=1e-14)

    def test_subset_out_of_range_rejected(self):
        with pytest.raises(ValidationError, match="class 5"):
            association_loss(subsets([5]), [[0.5, 0.5]])

    def test_count_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            association_loss(subsets([0]), [[0.5, 0.5], [0.5, 0.5]])

    def test_consistent_permutation_invariant(self):
        rng = np.random.default_rng(9)
        probs = rng.uniform(0.01, 0.99, size=(4, 3))
        assigned = subsets([0], [1, 2], [2], [0, 1])
        perm = [2, 0, 3, 1]
        a = association_loss(assigned, probs)
        b = association_loss([assigned[i] for i in perm], probs[perm])
        assert a == pytest.approx(b, rel=1e-15)


class TestCombinedLoss:
    def test_matches_hand_computed_parts(self):
        bd = combined_loss(
            [1.0, 0.0],
            [[0.8, 0.4], [0.6, 0.2]],
            None,
            alpha=0.3,
        )
        assert bd.association == 0.0
        assert bd.combined == bd.miml

    def test_derived_total(self):
        # miml = 0.36698..., association = 0.10536...; combined uses alpha 0.3
        probs = [[0.9, 0.1]]
        bd = combined_loss([1.0, 0.0], probs, subsets([0]), alpha=0.3)
        miml = miml_loss([1.0, 0.0], probs)
        assoc = association_loss(subsets([0]), probs)
        assert bd.combined == miml + 0.3 * assoc

    def test_frozen_example_values(self):
        miml = miml_loss([1.0, 0.0], [[0.8, 0.4], [0.6, 0.2]])
        assoc = association_loss(subsets([0]), [[0.9, 0.1]])
        assert miml + 0.3 * assoc == pytest.approx(0.39859, abs=5e-6)

    def test_alpha_zero_reduces_to_miml(self):
        probs = [[0.8, 0.4], [0.6, 0.2]]
        bd = combined_loss([1.0, 0.0], probs, subsets([0], [1]), alpha=0.0)
        assert bd.combined == bd.miml

    def test_decomposition_exact(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            n, c = int(rng.integers(1, 5)), int(rng.integers(1, 6))
            probs = rng.uniform(0.01, 0.99, size=(n, c))
            y = (rng.uniform(size=c) < 0.5).astype(float)
            assigned = [
                ActionSubset.from_classes(
                    np.flatnonzero(rng.uniform(size=c) < 0.4).tolist()
                )
                for _ in range(n)
            ]
            bd = combined_loss(y, probs, assigned, alpha=0.3)
            assert bd.combined == bd.miml + 0.3 * bd.association
            assert bd.miml >= 0.0 and bd.association >= 0.0

    def test_gradient_is_read_only(self):
        bd = combined_loss([1.0], [[0.5]], None)
        with pytest.raises(ValueError):
            bd.gradient[0, 0] = 1.0


class TestGradients:
    def test_single_actor_single_class(self):
        grad = loss_gradients([1.0], [[0.0]], None)
        assert grad.shape == (1, 1)
        assert grad[0, 0] == pytest.approx(-0.5, rel=1e-15)

    def test_saturated_absent_class_is_flat(self):
        grad = loss_gradients([0.0, 1.0], [[-30.0, 5.0]], subsets([1]))
        assert abs(grad[0, 0]) < 1e-7

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(77)
        h = 1e-4
        checked = 0
        while checked < 100:
            n, c = int(rng.integers(1, 6)), int(rng.integers(1, 9))
            logits = rng.uniform(-4.0, 4.0, size=(n, c))
            y = (rng.uniform(size=c) < 0.5).astype(float)
            assigned = [
                ActionSubset.from_classes(np.flatnonzero(rng.uniform(size=c) < 0.4).tolist())
                for _ in range(n)
            ]
            probs = sigmoid_probs(logits)
            # skip instances adjacent to a MIML argmax tie
            top2 = np.sort(probs, axis=0)
            if n > 1 and np.any(top2[-1] - top2[-2] < 1e-6):
                continue
            alpha = float(rng.uniform(0.0, 1.0))
            analytic = loss_gradients(y, logits, assigned, alpha)

            def f(ls):
                return combined_loss(y, sigmoid_probs(ls), assigned, alpha).combined

            fd = np.zeros_like(logits)
            for i in range(n):
                for j in range(c):
                    up = logits.copy()
                    up[i, j] += h
                    down = logits.copy()
                    down[i, j] -= h
                    fd[i, j] = (f(up) - f(down)) / (2.0 * h)
            scale = np.maximum(np.abs(fd), 1e-6)
            assert np.max(np.abs(analytic - fd) / scale) <= 1e-5
            checked += 1

    def test_gradient_shape(self):
        grad = loss_gradients([1.0, 0.0, 1.0], [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]], None)
        assert grad.shape == (2, 3)

    def test_miml_tie_routes_to_lowest_actor_index(self):
        grad = loss_gradients([1.0], [[0.3], [0.3]], None)
        assert grad[0, 0] != 0.0
        assert grad[1, 0] == 0.0


class TestLossBreakdownType:
    def test_fields(self):
        bd = combined_loss([1.0], [[0.9]], subsets([0]), alpha=0.3)
        assert isinstance(bd, LossBreakdown)
        assert bd.alpha == 0.3
        assert np.all(np.isfinite(bd.gradient))
