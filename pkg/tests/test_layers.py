import numpy as np
import pytest

from arabocr.nn import (
    BatchNormState,
    LayerSpec,
    ShapeError,
    activation_backward,
    activation_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    grad_check,
    maxpool_backward,
    maxpool_forward,
)

TOL = 1e-4
N_INSTANCES = 20


def test_conv_scalar_multiply():
    x = np.array([[[[3.0]]]])
    w = np.array([[[[2.5]]]])
    out, _ = conv2d_forward(x, w, np.zeros(1), LayerSpec.conv(1, kernel=1, padding=0))
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 7.5


def test_conv_delta_kernel_is_identity():
    x = np.random.default_rng(0).standard_normal((2, 1, 6, 7))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out, _ = conv2d_forward(x, w, np.zeros(1), LayerSpec.conv(1))
    np.testing.assert_array_equal(out, x)


def test_conv_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(1, 2, 5, 5\).*\(3, 1, 3, 3\)"):
        conv2d_forward(np.zeros((1, 2, 5, 5)), np.zeros((3, 1, 3, 3)), np.zeros(3), LayerSpec.conv(3))


def test_conv_linearity():
    rng = np.random.default_rng(1)
    spec = LayerSpec.conv(3, kernel=3, stride=2, padding=1)
    w, b = rng.standard_normal((3, 2, 3, 3)), np.zeros(3)
    x, y = rng.standard_normal((2, 2, 7, 6)), rng.standard_normal((2, 2, 7, 6))
    f = lambda v: conv2d_forward(v, w, b, spec)[0]
    np.testing.assert_allclose(f(2.0 * x - 3.0 * y), 2.0 * f(x) - 3.0 * f(y), atol=1e-10, rtol=0)


def _weighted_sum_check(forward, backward, inputs, rng, exclude=None):
    out = forward()
    r = rng.standard_normal(out.shape)
    grads = backward(r)
    return grad_check(lambda: float(np.sum(forward() * r)), inputs, grads, exclude=exclude)


@pytest.mark.parametrize("seed", range(N_INSTANCES))
def test_conv_gradients(seed):
    rng = np.random.default_rng(seed)
    stride, pad = [(1, 1), (2, 1), (1, 2), (2, 2)][seed % 4], [(1, 1), (0, 0), (1, 0)][seed % 3]
    spec = LayerSpec.conv(3, kernel=(3, 2 + seed % 2), stride=stride, padding=pad)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2) + spec.kernel)
    b = rng.standard_normal(3)

    def backward(r):
        _, cache = conv2d_forward(x, w, b, spec)
        dx, dw, db = conv2d_backward(r, cache)
        return {"x": dx, "w": dw, "b": db}

    report = _weighted_sum_check(lambda: conv2d_forward(x, w, b, spec)[0], backward, {"x": x, "w": w, "b": b}, rng)
    assert report.max_rel_error < TOL


def test_maxpool_examples():
    out, _ = maxpool_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), LayerSpec.maxpool(2, 2))
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 4.0
    out, _ = maxpool_forward(np.zeros((1, 1, 4, 5)), LayerSpec.maxpool((2, 1), (2, 1)))
    assert out.shape == (1, 1, 2, 5)
    with pytest.raises(ShapeError):
        maxpool_forward(np.zeros((1, 1, 1, 5)), LayerSpec.maxpool((2, 1), (2, 1)))


def test_maxpool_tie_routes_to_first_row_major():
    x = np.array([[[[5.0, 5.0], [5.0, 1.0]]]])
    _, cache = maxpool_forward(x, LayerSpec.maxpool(2, 2))
    dx = maxpool_backward(np.ones((1, 1, 1, 1)), cache)
    np.testing.assert_array_equal(dx, [[[[1.0, 0.0], [0.0, 0.0]]]])


def _pool_specs():
    return [
        LayerSpec.maxpool(2, 2),
        LayerSpec.maxpool((2, 1), (2, 1)),
        LayerSpec.maxpool(3, 1, padding=1),
        LayerSpec.maxpool((2, 2), (2, 1), padding=(0, 1)),
    ]


@pytest.mark.parametrize("seed", range(N_INSTANCES))
def test_maxpool_gradients_with_ties(seed):
    rng = np.random.default_rng(seed)
    spec = _pool_specs()[seed % 4]
    # coarse integer values make ties common
    tied = rng.integers(0, 3, size=(2, 2, 6, 6)).astype(np.float64)
    _, cache = maxpool_forward(tied, spec)
    r = rng.standard_normal(cache[2].shape)
    analytic_at_tie = maxpool_backward(r, cache)
    # break ties toward the first row-major element; routing must not change
    ramp = -1e-3 * np.arange(36, dtype=np.float64).reshape(6, 6)
    x = tied + ramp
    _, cache2 = maxpool_forward(x, spec)
    np.testing.assert_array_equal(maxpool_backward(r, cache2), analytic_at_tie)
    report = grad_check(lambda: float(np.sum(maxpool_forward(x, spec)[0] * r)), {"x": x}, {"x": analytic_at_tie})
    assert report.max_rel_error < TOL


@pytest.mark.parametrize("seed", range(10))
def test_maxpool_output_is_exact_window_max(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 6, 8))
    out, _ = maxpool_forward(x, LayerSpec.maxpool((2, 2), (2, 2)))
    expected = x.reshape(1, 2, 3, 2, 4, 2).max(axis=(3, 5))
    np.testing.assert_array_equal(out, expected)
    assert out.max() <= x.max()


def test_batchnorm_normalizes():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3, 5, 6)) * 3 + 7
    out, _ = batchnorm_forward(x, np.ones(3), np.zeros(3), BatchNormState.fresh(3), train=True)
    assert np.all(np.abs(out.mean(axis=(0, 2, 3))) < 1e-10)
    # biased variance of the normalized output is var / (var + eps)
    assert np.all(np.abs(out.var(axis=(0, 2, 3)) - 1) < 1e-4)
    out2, _ = batchnorm_forward(x, np.full(3, 2.0), np.full(3, 3.0), BatchNormState.fresh(3), train=True)
    np.testing.assert_allclose(out2.mean(axis=(0, 2, 3)), 3.0, atol=1e-10)
    np.testing.assert_allclose(out2.var(axis=(0, 2, 3)), 4.0, atol=1e-3)


def test_batchnorm_exact_unit_variance_for_large_spread():
    # with variance >> eps the output variance is 1 within 1e-6
    x = np.random.default_rng(1).standard_normal((8, 2, 4, 4)) * 100
    out, _ = batchnorm_forward(x, np.ones(2), np.zeros(2), BatchNormState.fresh(2), train=True)
    assert np.all(np.abs(out.var(axis=(0, 2, 3)) - 1) < 1e-6)


def test_batchnorm_needs_two_items_in_training():
    with pytest.raises(ShapeError):
        batchnorm_forward(np.zeros((1, 1, 2, 2)), np.ones(1), np.zeros(1), BatchNormState.fresh(1), train=True)


def test_batchnorm_running_stats_and_inference():
    rng = np.random.default_rng(2)
    state = BatchNormState.fresh(2)
    x = rng.standard_normal((3, 2, 2, 2)) + 5
    batchnorm_forward(x, np.ones(2), np.zeros(2), state, train=True)
    m = x.shape[0] * 4
    np.testing.assert_allclose(state.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * m / (m - 1))
    out, _ = batchnorm_forward(x, np.ones(2), np.zeros(2), state, train=False)
    expected = (x - state.running_mean[None, :, None, None]) / np.sqrt(state.running_var[None, :, None, None] + 1e-5)
    np.testing.assert_allclose(out, expected)


@pytest.mark.parametrize("seed", range(N_INSTANCES))
@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradients(seed, train):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 2, 3, 4)) * 2 + 1
    gamma, beta = rng.standard_normal(2), rng.standard_normal(2)
    running = BatchNormState(rng.standard_normal(2), rng.uniform(0.5, 2, 2))

    def fwd():
        return batchnorm_forward(x, gamma, beta, BatchNormState(running.running_mean.copy(), running.running_var.copy()), train)[0]

    def backward(r):
        _, cache = batchnorm_forward(x, gamma, beta, BatchNormState(running.running_mean.copy(), running.running_var.copy()), train)
        dx, dg, db = batchnorm_backward(r, cache)
        return {"x": dx, "gamma": dg, "beta": db}

    report = _weighted_sum_check(fwd, backward, {"x": x, "gamma": gamma, "beta": beta}, rng)
    assert report.max_rel_error < TOL


def test_activation_values():
    assert activation_forward(np.array([-1.0, 2.0]), "relu")[0].tolist() == [0.0, 2.0]
    assert activation_forward(np.array([0.0]), "sigmoid")[0][0] == 0.5
    assert activation_forward(np.array([0.0]), "tanh")[0][0] == 0.0
    big = np.array([-50.0, 50.0])
    for kind in ("sigmoid", "tanh"):
        out, cache = activation_forward(big, kind)
        assert np.all(np.isfinite(out)) and np.all(np.isfinite(activation_backward(np.ones(2), cache)))
    with pytest.raises(ValueError):
        activation_forward(big, "gelu")


@pytest.mark.parametrize("seed", range(N_INSTANCES))
@pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh"])
def test_activation_gradients(seed, kind):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 4))
    x.flat[:3] = 0.0  # the ReLU kink is excluded from the comparison
    exclude = {"x": np.abs(x) < 1e-4} if kind == "relu" else None

    def backward(r):
        return {"x": activation_backward(r, activation_forward(x, kind)[1])}

    report = _weighted_sum_check(lambda: activation_forward(x, kind)[0], backward, {"x": x}, rng, exclude)
    assert report.max_rel_error < TOL
    if kind == "relu":
        assert report.compared == x.size - 3


def test_grad_check_on_linear_map_is_near_machine_precision():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 3))
    x = rng.standard_normal(3)
    c = rng.standard_normal(4)
    report = grad_check(lambda: float(c @ (a @ x)), {"x": x}, {"x": a.T @ c})
    assert report.max_rel_error < 1e-8


def test_grad_check_requires_float64():
    x = np.zeros(2, dtype=np.float32)
    with pytest.raises(TypeError):
        grad_check(lambda: 0.0, {"x": x}, {"x": x})


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec.conv(4, kernel=0)
    with pytest.raises(ValueError):
        LayerSpec.maxpool(2, padding=-1)
