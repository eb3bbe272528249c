import numpy as np
import pytest

from breathlens.nn import ShapeMismatch
from breathlens.nn import layers as L

from oracles import (
    batchnorm_infer_reference,
    batchnorm_train_reference,
    conv1d_reference,
    conv2d_reference,
    dense_reference,
    global_avg_pool_reference,
)


def conv_params(weights, bias=None):
    weights = np.asarray(weights, dtype=np.float64)
    if bias is None:
        bias = np.zeros(weights.shape[0])
    return L.Conv1dParams(weights=weights, bias=np.asarray(bias, dtype=np.float64))


class TestConv1d:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(2, 1, 9))
        p = conv_params(np.ones((1, 1, 1)))
        np.testing.assert_array_equal(L.conv1d_forward(x, p), x)

    def test_zero_input_gives_bias(self):
        p = conv_params(np.ones((3, 2, 5)), bias=[1.0, -2.0, 0.5])
        out = L.conv1d_forward(np.zeros((1, 2, 8)), p)
        np.testing.assert_array_equal(out[0, 0], np.full(8, 1.0))
        np.testing.assert_array_equal(out[0, 1], np.full(8, -2.0))
        np.testing.assert_array_equal(out[0, 2], np.full(8, 0.5))

    def test_matches_naive_reference(self, rng):
        p = conv_params(np.random.default_rng(7).normal(size=(4, 2, 3)))
        x = np.random.default_rng(7).normal(size=(1, 2, 8))
        assert np.abs(L.conv1d_forward(x, p) - conv1d_reference(x, p.weights, p.bias)).max() < 1e-12

    def test_time_length_preserved(self, rng):
        for t in (2, 5, 11):
            for k in (1, 3, 5, 43):
                p = conv_params(rng.normal(size=(2, 3, k)))
                out = L.conv1d_forward(rng.normal(size=(2, 3, t)), p)
                assert out.shape == (2, 2, t)

    def test_channel_mismatch(self, rng):
        p = conv_params(rng.normal(size=(2, 3, 3)))
        with pytest.raises(ShapeMismatch):
            L.conv1d_forward(rng.normal(size=(1, 2, 8)), p)

    def test_even_kernel_rejected(self, rng):
        p = conv_params(rng.normal(size=(2, 2, 4)))
        with pytest.raises(ShapeMismatch):
            L.conv1d_forward(rng.normal(size=(1, 2, 8)), p)


class TestConv2d:
    def test_identity_filter(self, rng):
        x = rng.normal(size=(1, 1, 2, 7))
        p = conv_params(np.ones((1, 1, 1)))
        np.testing.assert_array_equal(L.conv2d_forward(x, p), x)

    def test_variable_separation(self, rng):
        p = conv_params(rng.normal(size=(3, 1, 5)))
        x = rng.normal(size=(1, 1, 2, 16))
        base = L.conv2d_forward(x, p)
        perturbed = x.copy()
        perturbed[0, 0, 0, :] += rng.normal(size=16)
        out = L.conv2d_forward(perturbed, p)
        np.testing.assert_array_equal(out[:, :, 1, :], base[:, :, 1, :])
        assert not np.array_equal(out[:, :, 0, :], base[:, :, 0, :])

    def test_matches_naive_reference(self, rng):
        gen = np.random.default_rng(11)
        x = gen.normal(size=(1, 2, 2, 16))
        p = conv_params(gen.normal(size=(3, 2, 5)))
        got = L.conv2d_forward(x, p)
        assert np.abs(got - conv2d_reference(x, p.weights, p.bias)).max() < 1e-12

    def test_backward_matches_conv1d_semantics(self, rng):
        x = rng.normal(size=(2, 3, 2, 10))
        p = conv_params(rng.normal(size=(4, 3, 3)))
        gy = rng.normal(size=(2, 4, 2, 10))
        gx, gw, gb = L.conv2d_backward(x, p, gy)
        assert gx.shape == x.shape
        assert gw.shape == p.weights.shape
        # folding the variable axis into the batch must give identical grads
        xf = np.ascontiguousarray(x.transpose(0, 2, 1, 3).reshape(4, 3, 10))
        gyf = np.ascontiguousarray(gy.transpose(0, 2, 1, 3).reshape(4, 4, 10))
        _, gw_f, gb_f = L.conv1d_backward(xf, p, gyf)
        np.testing.assert_allclose(gw, gw_f, atol=1e-12)
        np.testing.assert_allclose(gb, gb_f, atol=1e-12)


class TestBatchNorm:
    def test_train_mode_normalizes(self, rng):
        x = rng.normal(loc=3.0, scale=2.5, size=(8, 4, 20))
        p = L.BatchNormParams.init(4)
        out, _ = L.batchnorm_forward(x, p, train=True)
        for ch in range(4):
            assert abs(out[:, ch].mean()) < 1e-7
            assert abs(out[:, ch].var() - 1.0) < 1e-5

    def test_affine_transform(self, rng):
        x = rng.normal(size=(16, 2, 10))
        p = L.BatchNormParams.init(2)
        p.gamma[:] = 2.0
        p.beta[:] = 3.0
        out, _ = L.batchnorm_forward(x, p, train=True)
        for ch in range(2):
            assert abs(out[:, ch].mean() - 3.0) < 1e-7
            assert abs(out[:, ch].std() - 2.0) < 1e-4  # within the eps skew

    def test_matches_train_reference(self, rng):
        x = rng.normal(size=(5, 3, 7))
        p = L.BatchNormParams.init(3)
        p.gamma[:] = rng.normal(size=3)
        p.beta[:] = rng.normal(size=3)
        out, _ = L.batchnorm_forward(x, p, train=True, update_running=False)
        ref = batchnorm_train_reference(x, p.gamma, p.beta)
        assert np.abs(out - ref).max() < 1e-12

    def test_infer_uses_running_stats(self, rng):
        x = rng.normal(size=(4, 2, 6))
        p = L.BatchNormParams.init(2)
        p.running_mean[:] = [0.5, -1.0]
        p.running_var[:] = [4.0, 0.25]
        out, _ = L.batchnorm_forward(x, p, train=False)
        ref = batchnorm_infer_reference(x, p.gamma, p.beta, p.running_mean, p.running_var)
        assert np.abs(out - ref).max() < 1e-12

    def test_running_stats_update(self, rng):
        x = rng.normal(loc=2.0, size=(32, 1, 50))
        p = L.BatchNormParams.init(1)
        L.batchnorm_forward(x, p, train=True)
        expected_mean = 0.9 * 0.0 + 0.1 * x.mean()
        assert abs(p.running_mean[0] - expected_mean) < 1e-12
        L.batchnorm_forward(x, p, train=True, update_running=False)
        assert abs(p.running_mean[0] - expected_mean) < 1e-12  # unchanged

    def test_2d_feature_maps(self, rng):
        x = rng.normal(size=(3, 4, 2, 9))
        p = L.BatchNormParams.init(4)
        out, _ = L.batchnorm_forward(x, p, train=True)
        assert out.shape == x.shape
        assert abs(out[:, 1].mean()) < 1e-7


class TestSmallOps:
    def test_relu(self):
        np.testing.assert_array_equal(
            L.relu(np.array([-1.0, 0.0, 2.0])), np.array([0.0, 0.0, 2.0])
        )

    def test_global_avg_pool_constant(self):
        x = np.full((2, 3, 10), 3.0)
        np.testing.assert_array_equal(L.global_avg_pool(x), np.full((2, 3), 3.0))

    def test_global_avg_pool_matches_reference(self, rng):
        for shape in [(2, 3, 7), (2, 3, 4, 5)]:
            x = rng.normal(size=shape)
            got = L.global_avg_pool(x)
            assert np.abs(got - global_avg_pool_reference(x)).max() < 1e-12

    def test_dense_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        p = L.DenseParams(weights=np.eye(3), bias=np.zeros(3))
        np.testing.assert_array_equal(L.dense_forward(x, p), x)

    def test_dense_matches_reference(self, rng):
        x = rng.normal(size=(4, 6))
        p = L.DenseParams.init(rng, 6, 5)
        got = L.dense_forward(x, p)
        assert np.abs(got - dense_reference(x, p.weights, p.bias)).max() < 1e-12


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss, probs = L.softmax_cross_entropy(np.zeros(5), 3)
        np.testing.assert_allclose(probs, np.full(5, 0.2), atol=1e-15)
        assert abs(loss - np.log(5)) < 1e-12

    def test_saturated_case(self):
        loss, probs = L.softmax_cross_entropy(np.array([10.0, 0, 0, 0, 0]), 0)
        assert loss < 0.001
        assert probs.argmax() == 0

    def test_matches_high_precision_oracle(self, rng):
        from mpmath import mp, mpf, exp as mpexp

        mp.dps = 60
        for _ in range(20):
            logits = rng.normal(scale=5.0, size=5)
            _, probs = L.softmax_cross_entropy(logits, 0)
            exps = [mpexp(mpf(float(v))) for v in logits]
            total = sum(exps)
            oracle = np.array([float(e / total) for e in exps])
            assert np.abs(probs - oracle).max() < 1e-12

    def test_probabilities_sum_to_one(self, rng):
        for _ in range(50):
            logits = rng.normal(scale=rng.uniform(0.1, 50), size=5)
            _, probs = L.softmax_cross_entropy(logits, int(rng.integers(5)))
            assert probs.min() >= 0.0
            assert abs(probs.sum() - 1.0) < 1e-9

    def test_extreme_logits_stay_finite(self):
        loss, probs = L.softmax_cross_entropy(np.array([1e4, -1e4, 0.0, 0.0, 0.0]), 1)
        assert np.isfinite(probs).all()
        assert np.isfinite(loss)

    def test_batch_grad_is_mean_softmax_minus_onehot(self, rng):
        logits = rng.normal(size=(4, 5))
        targets = np.array([0, 1, 2, 3])
        loss, probs, grad = L.softmax_cross_entropy_batch(logits, targets)
        manual = probs.copy()
        manual[np.arange(4), targets] -= 1.0
        np.testing.assert_allclose(grad, manual / 4.0, atol=1e-15)


class TestLayerGradients:
    """Central finite differences on each layer in isolation."""

    def scalar_probe(self, forward, backward, x, rng, atol=3e-8):
        probe = rng.normal(size=forward(x).shape)
        gx = backward(x, probe)
        eps = 1e-6
        it = np.nditer(x, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = x[idx]
            x[idx] = orig + eps
            up = float(np.sum(forward(x) * probe))
            x[idx] = orig - eps
            down = float(np.sum(forward(x) * probe))
            x[idx] = orig
            fd = (up - down) / (2 * eps)
            assert abs(fd - gx[idx]) < max(atol, 1e-5 * abs(fd))

    def test_conv1d_input_grad(self, rng):
        p = conv_params(rng.normal(size=(3, 2, 5)))
        self.scalar_probe(
            lambda x: L.conv1d_forward(x, p),
            lambda x, g: L.conv1d_backward(x, p, g)[0],
            rng.normal(size=(2, 2, 7)),
            rng,
        )

    def test_batchnorm_train_input_grad(self, rng):
        p = L.BatchNormParams.init(3)
        p.gamma[:] = rng.normal(size=3)

        def forward(x):
            return L.batchnorm_forward(x, p, train=True, update_running=False)[0]

        def backward(x, g):
            _, cache = L.batchnorm_forward(x, p, train=True, update_running=False)
            return L.batchnorm_backward(cache, p, g)[0]

        self.scalar_probe(forward, backward, rng.normal(size=(4, 3, 5)), rng)

    def test_dense_param_grads_closed_form(self, rng):
        # quadratic probe: loss = sum(y * probe); grads have a closed form
        x = rng.normal(size=(3, 4))
        p = L.DenseParams.init(rng, 4, 2)
        probe = rng.normal(size=(3, 2))
        _, gw, gb = L.dense_backward(x, p, probe)
        np.testing.assert_allclose(gw, probe.T @ x, atol=1e-12)
        np.testing.assert_allclose(gb, probe.sum(axis=0), atol=1e-12)
