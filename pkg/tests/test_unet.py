import numpy as np
import pytest
import torch

from inference.unet import (
    BackwardError,
    UNetConfig,
    UNetShapeError,
    backward,
    build_unet,
    conv2d_same,
    forward,
    instance_norm2d,
    model_from_params,
    mse_loss,
    parameter_count,
)


def naive_conv(x, w, b):
    c_out, c_in = w.shape[:2]
    _, height, width = x.shape
    padded = np.zeros((c_in, height + 2, width + 2))
    padded[:, 1:-1, 1:-1] = x
    out = np.zeros((c_out, height, width))
    for o in range(c_out):
        for i in range(height):
            for j in range(width):
                total = b[o]
                for c in range(c_in):
                    for di in range(3):
                        for dj in range(3):
                            total += w[o, c, di, dj] * padded[c, i + di, j + dj]
                out[o, i, j] = total
    return out


def test_conv2d_same_matches_direct_loops(rng):
    x = rng.normal(size=(2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = conv2d_same(torch.from_numpy(x), torch.from_numpy(w), torch.from_numpy(b))
    np.testing.assert_allclose(out.numpy(), naive_conv(x, w, b), atol=1e-5)


def test_conv2d_same_impulse_kernel_is_identity(rng):
    x = torch.from_numpy(rng.normal(size=(1, 6, 4)))
    w = torch.zeros(1, 1, 3, 3, dtype=torch.float64)
    w[0, 0, 1, 1] = 1.0
    out = conv2d_same(x, w, torch.zeros(1, dtype=torch.float64))
    assert torch.equal(out, x)


def test_conv2d_same_shape_errors():
    x = torch.zeros(2, 4, 4)
    with pytest.raises(UNetShapeError):
        conv2d_same(x, torch.zeros(3, 3, 3, 3), torch.zeros(3))
    with pytest.raises(UNetShapeError):
        conv2d_same(x, torch.zeros(3, 2, 3, 3), torch.zeros(2))
    with pytest.raises(UNetShapeError):
        conv2d_same(x, torch.zeros(3, 2, 5, 5), torch.zeros(3))


def test_instance_norm_matches_loops(rng):
    x = rng.normal(2.0, 3.0, size=(3, 4, 5))
    gamma = rng.normal(size=3)
    beta = rng.normal(size=3)
    out = instance_norm2d(torch.from_numpy(x), torch.from_numpy(gamma), torch.from_numpy(beta), eps=1e-5)

    expected = np.empty_like(x)
    for c in range(3):
        values = x[c].ravel()
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        expected[c] = gamma[c] * (x[c] - mean) / np.sqrt(var + 1e-5) + beta[c]
    np.testing.assert_allclose(out.numpy(), expected, atol=1e-6)


def test_instance_norm_standardizes(rng):
    x = torch.from_numpy(rng.normal(5.0, 4.0, size=(4, 8, 8)))
    out = instance_norm2d(x, torch.ones(4, dtype=torch.float64), torch.zeros(4, dtype=torch.float64))
    for c in range(4):
        assert abs(out[c].mean().item()) < 1e-5
        assert abs(out[c].std(unbiased=False).item() - 1.0) < 1e-3


def test_instance_norm_constant_channel_is_finite():
    out = instance_norm2d(torch.full((1, 1, 3, 3), 7.0), torch.ones(1), torch.full((1,), 0.25))
    assert torch.isfinite(out).all()
    torch.testing.assert_close(out, torch.full_like(out, 0.25), rtol=0.0, atol=1e-6)


def test_instance_norm_single_pixel_channel_gives_beta():
    beta = torch.tensor([0.5, -1.0])
    out = instance_norm2d(torch.full((2, 1, 1), 3.0), torch.tensor([2.0, 3.0]), beta)
    assert out.shape == (2, 1, 1)
    torch.testing.assert_close(out.flatten(), beta)


def test_mse_matches_loop(rng):
    y = rng.random((3, 4, 4))
    t = rng.random((3, 4, 4))
    expected = sum((a - b) ** 2 for a, b in zip(y.ravel(), t.ravel())) / y.size
    out = mse_loss(torch.from_numpy(y), torch.from_numpy(t))
    assert abs(out.item() - expected) < 1e-7


def test_mse_shape_mismatch():
    with pytest.raises(UNetShapeError):
        mse_loss(torch.zeros(3, 4, 4), torch.zeros(3, 4, 5))


def test_tiny_parameter_count(tiny_config, tiny_model):
    assert parameter_count(tiny_config) == 1959
    assert tiny_model.parameter_count() == 1959
    assert len(tiny_model.params) == 30


@pytest.mark.parametrize("depth, base", [(1, 1), (2, 8), (3, 4), (4, 64)])
def test_parameter_count_formula(depth, base):
    config = UNetConfig(depth=depth, base_channels=base)
    assert build_unet(config).parameter_count() == parameter_count(config)


def test_channels_double_per_stage():
    model = build_unet(UNetConfig(depth=3, base_channels=4))
    params = model.params
    assert params["encoders.0.first.weight"].shape[0] == 4
    assert params["encoders.1.first.weight"].shape[0] == 8
    assert params["encoders.2.first.weight"].shape[0] == 16
    assert params["bottleneck.second.weight"].shape[0] == 32
    assert params["head.weight"].shape == (3, 4, 1, 1)


def test_config_rejects_non_positive():
    with pytest.raises(ValueError):
        UNetConfig(depth=0)
    with pytest.raises(ValueError):
        UNetConfig(base_channels=0)


def test_build_is_deterministic():
    a = build_unet(UNetConfig(depth=1, base_channels=4), seed=3)
    b = build_unet(UNetConfig(depth=1, base_channels=4), seed=3)
    c = build_unet(UNetConfig(depth=1, base_channels=4), seed=4)
    assert all(torch.equal(a.params[n], b.params[n]) for n in a.params)
    assert not torch.equal(a.params["head.weight"], c.params["head.weight"])


def test_forward_shapes_and_range(tiny_model, rng):
    x = rng.random((3, 8, 12)).astype(np.float32)
    y = forward(tiny_model, x)
    assert y.shape == (3, 8, 12)
    assert (y > 0).all() and (y < 1).all()
    batch = forward(tiny_model, np.stack([x, x]))
    assert batch.shape == (2, 3, 8, 12)


@pytest.mark.parametrize("depth, size", [(1, (2, 2)), (2, (4, 4)), (2, (4, 12)), (4, (16, 16))])
def test_forward_at_minimum_size(depth, size, rng):
    model = build_unet(UNetConfig(depth=depth, base_channels=4), seed=0)
    x = rng.random((3, *size)).astype(np.float32)
    y = forward(model, x)
    assert y.shape == (3, *size)
    assert torch.isfinite(y).all()
    assert (y > 0).all() and (y < 1).all()


def test_batch_items_are_independent(tiny_model, rng):
    a = rng.random((3, 8, 8)).astype(np.float32)
    b = rng.random((3, 8, 8)).astype(np.float32)
    batch = forward(tiny_model, np.stack([a, b]))
    torch.testing.assert_close(batch[0], forward(tiny_model, a), atol=1e-6, rtol=0)
    torch.testing.assert_close(batch[1], forward(tiny_model, b), atol=1e-6, rtol=0)


def test_forward_shape_errors(tiny_model):
    with pytest.raises(UNetShapeError, match="pad_to_multiple"):
        forward(tiny_model, np.zeros((3, 9, 8), dtype=np.float32))
    with pytest.raises(UNetShapeError):
        forward(tiny_model, np.zeros((1, 8, 8), dtype=np.float32))
    with pytest.raises(UNetShapeError):
        forward(tiny_model, np.zeros((8, 8), dtype=np.float32))


def test_backward_requires_recorded_forward(tiny_model, rng):
    x = rng.random((3, 8, 8)).astype(np.float32)
    loss = mse_loss(forward(tiny_model, x), torch.from_numpy(x))
    with pytest.raises(BackwardError):
        backward(tiny_model, loss)

    loss = mse_loss(forward(tiny_model, x, record=True), torch.from_numpy(x))
    backward(tiny_model, loss)
    with pytest.raises(BackwardError):
        backward(tiny_model, loss)


def test_head_bias_gradient_closed_form(tiny_model):
    with torch.no_grad():
        tiny_model.params["head.weight"].zero_()
    x = np.random.default_rng(0).random((3, 8, 8)).astype(np.float32)
    y = forward(tiny_model, x, record=True)
    backward(tiny_model, mse_loss(y, torch.ones_like(y)))

    grads = tiny_model.grads
    torch.testing.assert_close(grads["head.bias"], torch.full((3,), -1.0 / 12.0), atol=1e-7, rtol=0)
    for name, g in grads.items():
        if name != "head.bias" and name != "head.weight":
            assert torch.count_nonzero(g) == 0, name


def _loss(model, x, target):
    return mse_loss(forward(model, x), target).item()


class FrozenBranch:
    """Replays the network with the ReLU masks and max-pool winners of its first call.

    The replayed loss is smooth in the parameters; at the recorded point it
    equals the network's loss and has the same gradient.
    """

    def __init__(self, model):
        self.net = model.net
        self.masks = {}
        self.winners = {}

    def _block(self, key, block, x):
        z = instance_norm2d(conv2d_same(x, block.weight, block.bias), block.gamma, block.beta, block.eps)
        if key not in self.masks:
            self.masks[key] = z > 0
        return z * self.masks[key]

    def _double(self, key, double, x):
        return self._block(key + ".second", double.second, self._block(key + ".first", double.first, x))

    def _pool(self, key, x):
        if key not in self.winners:
            self.winners[key] = torch.nn.functional.max_pool2d(x, 2, return_indices=True)[1]
        indices = self.winners[key]
        return x.flatten(-2).gather(-1, indices.flatten(-2)).view_as(indices)

    def loss(self, x, target):
        x = x.unsqueeze(0)
        skips = []
        for k, encoder in enumerate(self.net.encoders):
            x = self._double(f"enc{k}", encoder, x)
            skips.append(x)
            x = self._pool(f"pool{k}", x)
        x = self._double("bottleneck", self.net.bottleneck, x)
        for k, (decoder, skip) in enumerate(zip(self.net.decoders, reversed(skips))):
            x = torch.nn.functional.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = self._block(f"dec{k}.reduce", decoder.reduce, x)
            x = self._double(f"dec{k}.fuse", decoder.fuse, torch.cat([skip, x], dim=1))
        y = self.net.head(x)
        return mse_loss(y.squeeze(0), target).item()


def test_gradients_match_central_differences():
    model = build_unet(UNetConfig(depth=1, base_channels=4), seed=11).to(dtype=torch.float64)
    rng = np.random.default_rng(5)
    x = torch.from_numpy(rng.random((3, 8, 8)))
    target = torch.from_numpy(rng.random((3, 8, 8)))

    y = forward(model, x, record=True)
    backward(model, mse_loss(y, target))
    analytic = {name: g.clone() for name, g in model.grads.items()}

    step = 1e-3
    branch = FrozenBranch(model)
    failures = []
    with torch.no_grad():
        assert branch.loss(x, target) == pytest.approx(_loss(model, x, target), rel=1e-12)
        for name, p in model.params.items():
            flat = p.view(-1)
            grad = analytic[name].view(-1)
            for k in range(flat.numel()):
                original = flat[k].item()
                flat[k] = original + step
                above = branch.loss(x, target)
                flat[k] = original - step
                below = branch.loss(x, target)
                flat[k] = original
                estimate = (above - below) / (2 * step)
                a = grad[k].item()
                if abs(estimate - a) > 1e-4 * max(abs(estimate), abs(a)) and abs(estimate - a) > 1e-7:
                    failures.append((name, k, a, estimate))
    assert not failures, failures[:5]


def test_model_from_params_round_trip(tiny_model, rng):
    rebuilt = model_from_params(tiny_model.config, {n: p.detach().numpy() for n, p in tiny_model.params.items()})
    x = rng.random((3, 8, 8)).astype(np.float32)
    assert torch.equal(forward(rebuilt, x), forward(tiny_model, x))


def test_model_from_params_rejects_mismatch(tiny_model):
    params = {n: p.detach().clone() for n, p in tiny_model.params.items()}
    params["head.bias"] = torch.zeros(4)
    with pytest.raises(UNetShapeError):
        model_from_params(tiny_model.config, params)
    del params["head.bias"]
    with pytest.raises(UNetShapeError):
        model_from_params(tiny_model.config, params)
