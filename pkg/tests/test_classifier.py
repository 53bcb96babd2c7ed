from __future__ import annotations

import math

import numpy as np
import pytest

from ercml.classifier import (
    batch_class_weights,
    ce_loss_and_grad,
    classifier_backward,
    classifier_from_tensors,
    classifier_to_tensors,
    classify,
    classify_batch,
    init_classifier,
    predicted_label,
    pretrain_classifier,
    weighted_cross_entropy,
)
from ercml.corpus import EMOTION_IDS
from ercml.errors import BadTarget, EmptyBatch
from ercml.gradcheck import fd_gradients, group_relative_error


class TestClassify:
    def test_hand_computed_degenerate_forward(self):
        # zero value/output/feed-forward paths reduce the encoder to
        # layernorm(layernorm(x)); at d=2 that is computable by hand
        params = init_classifier(2, label_space=(0, 1, 4), heads=1, ffn_dim=4, seed=0)
        for name in ("w_v", "b_v", "w_o", "b_o", "w_ff1", "b_ff1", "w_ff2", "b_ff2"):
            getattr(params.encoder, name)[...] = 0.0
        params.w_out[...] = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        params.b_out[...] = np.array([0.0, 0.0, 1.0])

        x = np.array([1.0, 3.0])
        # pencil-and-paper: mean 2, deviations (-1, +1), var 1
        eps = 1e-5
        xhat = np.array([-1.0, 1.0]) / math.sqrt(1.0 + eps)
        # second norm: mean 0, var = xhat[0]^2
        xhat2 = xhat / math.sqrt(xhat[0] ** 2 + eps)
        expected = np.array([xhat2[0], xhat2[1], 1.0])
        np.testing.assert_allclose(classify(x, params), expected, atol=1e-12)

    def test_k_logits(self):
        params = init_classifier(8, seed=1)
        logits = classify(np.random.default_rng(0).standard_normal(8), params)
        assert logits.shape == (7,)
        assert np.all(np.isfinite(logits))

    def test_purity(self):
        params = init_classifier(8, seed=2)
        x = np.random.default_rng(1).standard_normal(8)
        np.testing.assert_array_equal(classify(x, params), classify(x.copy(), params))

    def test_argmax_shift_invariance(self):
        rng = np.random.default_rng(3)
        space = tuple(range(7))
        for _ in range(50):
            logits = rng.standard_normal(7)
            shifted = logits + rng.uniform(-100, 100)
            assert predicted_label(logits, space) == predicted_label(shifted, space)

    def test_tie_breaks_to_lowest_index(self):
        logits = np.array([1.0, 2.0, 2.0])
        assert predicted_label(logits, (0, 5, 6)) == 5


class TestWeightedCrossEntropy:
    def test_saturated_softmax_near_zero(self):
        logits = np.full(7, -30.0)
        logits[4] = 30.0
        loss = weighted_cross_entropy(logits, 4, {}, tuple(range(7)))
        assert loss < 1e-9

    def test_uniform_logits_ln_k(self):
        loss = weighted_cross_entropy(np.zeros(7), 3, {}, tuple(range(7)))
        assert loss == pytest.approx(math.log(7), abs=1e-6)
        assert loss == pytest.approx(1.945910, abs=1e-6)

    def test_linear_in_weight(self):
        logits = np.array([0.3, -1.0, 2.0])
        space = (0, 1, 2)
        base = weighted_cross_entropy(logits, 1, {1: 1.0}, space)
        doubled = weighted_cross_entropy(logits, 1, {1: 2.0}, space)
        assert doubled == pytest.approx(2.0 * base)

    def test_bad_target(self):
        with pytest.raises(BadTarget):
            weighted_cross_entropy(np.zeros(3), 6, {}, (0, 1, 2))

    def test_strictly_positive_unless_saturated(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            logits = rng.standard_normal(7) * 3
            loss = weighted_cross_entropy(logits, 2, {}, tuple(range(7)))
            assert loss > 0.0

    def test_gradient_formula_and_finite_differences(self):
        # d(loss)/d(logits) = w(target) * (softmax - onehot), checked
        # against both the closed form and central differences
        rng = np.random.default_rng(6)
        space = tuple(range(7))
        logits = rng.standard_normal((4, 7))
        targets = [2, 0, 5, 2]
        weights = {0: 0.5, 2: 2.0, 5: 1.3}
        loss, d_logits = ce_loss_and_grad(logits, targets, weights, space)

        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        softmax = shifted / shifted.sum(axis=1, keepdims=True)
        expected = softmax.copy()
        for i, t in enumerate(targets):
            expected[i, t] -= 1.0
            expected[i] *= weights.get(t, 1.0) / len(targets)
        np.testing.assert_allclose(d_logits, expected, atol=1e-12)

        def loss_fn():
            return ce_loss_and_grad(logits, targets, weights, space)[0]

        numeric = fd_gradients(loss_fn, {"logits": logits}, eps=1e-5)["logits"]
        assert group_relative_error(d_logits, numeric) < 1e-5


class TestBatchClassWeights:
    def test_balanced_batch(self):
        w = batch_class_weights([1, 1, 2, 2])
        assert w[1] == pytest.approx(1.0)
        assert w[2] == pytest.approx(1.0)

    def test_imbalanced_batch(self):
        # 4 / (2 * 3) and 4 / (2 * 1)
        w = batch_class_weights([1, 1, 1, 2])
        assert w[1] == pytest.approx(2 / 3)
        assert w[2] == pytest.approx(2.0)

    def test_singleton_batch(self):
        assert batch_class_weights([4]) == {4: 1.0}

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            batch_class_weights([])


class TestClassifierGradients:
    def test_full_path_matches_finite_differences(self):
        params = init_classifier(6, label_space=(0, 1, 4), heads=2, ffn_dim=12, seed=9)
        rng = np.random.default_rng(10)
        reps = rng.standard_normal((5, 6))
        targets = [0, 1, 4, 1, 0]
        weights = batch_class_weights(targets)

        def loss():
            logits, _ = classify_batch(reps, params)
            return ce_loss_and_grad(logits, targets, weights, params.label_space)[0]

        logits, cache = classify_batch(reps, params)
        _, d_logits = ce_loss_and_grad(logits, targets, weights, params.label_space)
        d_reps, grads = classifier_backward(d_logits, cache, params)

        numeric = fd_gradients(loss, params.tensors(), eps=1e-4)
        for name in params.tensors():
            err = group_relative_error(grads[name], numeric[name])
            assert err < 1e-3, f"{name}: rel err {err:.3e}"
        numeric_reps = fd_gradients(loss, {"reps": reps}, eps=1e-4)["reps"]
        assert group_relative_error(d_reps, numeric_reps) < 1e-3


class TestPretrain:
    def test_overfits_mini_fixture(self, train_corpus, store16):
        params = pretrain_classifier(train_corpus, store16, steps=200, seed=0)
        reps, targets = [], []
        for d, u in train_corpus.iter_utterances():
            if u.label in EMOTION_IDS:
                reps.append(store16.get(d.id, u.index))
                targets.append(u.label)
        logits, _ = classify_batch(np.stack(reps), params)
        preds = [params.label_space[int(i)] for i in np.argmax(logits, axis=1)]
        acc = np.mean([p == t for p, t in zip(preds, targets)])
        assert acc >= 0.9

    def test_seed_determinism(self, train_corpus, store16):
        a = pretrain_classifier(train_corpus, store16, steps=30, seed=11)
        b = pretrain_classifier(train_corpus, store16, steps=30, seed=11)
        for name, arr in a.tensors().items():
            np.testing.assert_array_equal(arr, b.tensors()[name])

    def test_six_label_ablation_space(self, train_corpus, store16):
        params = pretrain_classifier(
            train_corpus, store16, label_space=EMOTION_IDS, steps=20, seed=0
        )
        assert params.label_space == EMOTION_IDS
        assert len(params.label_space) == 6
        logits = classify(np.zeros(16), params)
        assert logits.shape == (6,)


class TestCheckpointRoundTrip:
    def test_to_from_tensors(self):
        params = init_classifier(8, seed=3)
        tensors, meta = classifier_to_tensors(params)
        again = classifier_from_tensors(tensors, meta)
        assert again.label_space == params.label_space
        for name, arr in params.tensors().items():
            np.testing.assert_array_equal(arr, again.tensors()[name])
