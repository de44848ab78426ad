"""U-Net with instance normalization and a sigmoid head.

Encoder stages are two (3x3 conv -> instance norm -> ReLU) blocks followed by
2x2 max pooling; the bottleneck is one more double block; each decoder stage
upsamples 2x bilinearly, halves the channels with a conv block, concatenates
the skip connection and applies a double block. A 1x1 conv and a sigmoid map
the first-stage features to the output channels. All convolutions are
zero-padded so every stage keeps its spatial size.
"""

import logging
from collections import OrderedDict
from typing import Dict, Optional, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, Extra, validator

logger = logging.getLogger(__name__)


class UNetShapeError(ValueError):
    """Tensor shapes incompatible with an operation or the model."""


class BackwardError(RuntimeError):
    """Backward requested without a fresh recorded forward pass."""


class UNetConfig(BaseModel):
    in_channels: int = 3
    out_channels: int = 3
    depth: int = 4
    base_channels: int = 64
    norm_epsilon: float = 1e-5

    class Config:
        extra = Extra.forbid
        allow_mutation = False

    @validator("in_channels", "out_channels", "depth", "base_channels")
    def _positive(cls, v, field):
        if v < 1:
            raise ValueError(f"{field.name} must be >= 1")
        return v

    @validator("norm_epsilon")
    def _eps(cls, v):
        if v < 0:
            raise ValueError("norm_epsilon must be >= 0")
        return v

    def stage_channels(self, k: int) -> int:
        return self.base_channels * 2 ** k

    @property
    def size_multiple(self) -> int:
        return 2 ** self.depth


def parameter_count(config: UNetConfig) -> int:
    """Closed-form number of scalar parameters of :func:`build_unet`."""
    def block(c_in, c_out):
        return 9 * c_in * c_out + 3 * c_out  # conv weight, conv bias, gamma, beta

    def double(c_in, c_out):
        return block(c_in, c_out) + block(c_out, c_out)

    total = 0
    c_in = config.in_channels
    for k in range(config.depth):
        total += double(c_in, config.stage_channels(k))
        c_in = config.stage_channels(k)
    total += double(c_in, config.stage_channels(config.depth))
    for k in reversed(range(config.depth)):
        c = config.stage_channels(k)
        total += block(2 * c, c) + double(2 * c, c)
    total += config.base_channels * config.out_channels + config.out_channels
    return total


# ----------------------------------------------------------------------------
# Functional building blocks
# ----------------------------------------------------------------------------

def conv2d_same(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1. ``x`` is (C,H,W) or (N,C,H,W)."""
    if weight.dim() != 4 or weight.shape[2:] != (3, 3):
        raise UNetShapeError(f"weight must be C_out x C_in x 3 x 3, got {tuple(weight.shape)}")
    if x.dim() not in (3, 4):
        raise UNetShapeError(f"input must be C x H x W or N x C x H x W, got {tuple(x.shape)}")
    c_in = x.shape[-3]
    if c_in != weight.shape[1]:
        raise UNetShapeError(f"input channels ({c_in}) != weight C_in ({weight.shape[1]})")
    if bias.dim() != 1 or bias.shape[0] != weight.shape[0]:
        raise UNetShapeError(f"bias length ({tuple(bias.shape)}) != weight C_out ({weight.shape[0]})")
    return F.conv2d(x, weight, bias, stride=1, padding=1)


def instance_norm2d(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor,
                    eps: float = 1e-5) -> torch.Tensor:
    """Per-instance, per-channel standardization with learned affine."""
    unbatched = x.dim() == 3
    if unbatched:
        x = x.unsqueeze(0)
    if x.shape[-1] * x.shape[-2] < 1:
        raise UNetShapeError("instance_norm2d needs at least one spatial element")
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise UNetShapeError(
            f"gamma/beta must have {x.shape[1]} entries, got {tuple(gamma.shape)}/{tuple(beta.shape)}"
        )
    mean = x.mean(dim=(-2, -1), keepdim=True)
    var = x.var(dim=(-2, -1), unbiased=False, keepdim=True)
    y = (x - mean) / torch.sqrt(var + eps)
    y = y * gamma.view(1, -1, 1, 1) + beta.view(1, -1, 1, 1)
    return y.squeeze(0) if unbatched else y


def mse_loss(y: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over every element (and every batch item) of the squared error."""
    if y.shape != target.shape:
        raise UNetShapeError(f"loss shapes differ: {tuple(y.shape)} vs {tuple(target.shape)}")
    return F.mse_loss(y, target, reduction="mean")


# ----------------------------------------------------------------------------
# Modules
# ----------------------------------------------------------------------------

class ConvBlock(nn.Module):
    """conv3x3 -> instance norm -> ReLU."""

    def __init__(self, c_in: int, c_out: int, eps: float):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.empty(c_out, c_in, 3, 3))
        self.bias = nn.Parameter(torch.zeros(c_out))
        self.gamma = nn.Parameter(torch.ones(c_out))
        self.beta = nn.Parameter(torch.zeros(c_out))

    def forward(self, x):
        x = conv2d_same(x, self.weight, self.bias)
        return F.relu(instance_norm2d(x, self.gamma, self.beta, self.eps))


class DoubleConv(nn.Module):
    def __init__(self, c_in: int, c_out: int, eps: float):
        super().__init__()
        self.first = ConvBlock(c_in, c_out, eps)
        self.second = ConvBlock(c_out, c_out, eps)

    def forward(self, x):
        return self.second(self.first(x))


class UpStage(nn.Module):
    def __init__(self, c_in: int, c_out: int, eps: float):
        super().__init__()
        self.reduce = ConvBlock(c_in, c_out, eps)
        self.fuse = DoubleConv(2 * c_out, c_out, eps)

    def forward(self, x, skip):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = self.reduce(x)
        return self.fuse(torch.cat([skip, x], dim=1))


class Head(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(c_out, c_in, 1, 1))
        self.bias = nn.Parameter(torch.zeros(c_out))

    def forward(self, x):
        return torch.sigmoid(F.conv2d(x, self.weight, self.bias))


class StrokeUNet(nn.Module):
    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        eps = config.norm_epsilon
        self.encoders = nn.ModuleList()
        c_in = config.in_channels
        for k in range(config.depth):
            self.encoders.append(DoubleConv(c_in, config.stage_channels(k), eps))
            c_in = config.stage_channels(k)
        self.bottleneck = DoubleConv(c_in, config.stage_channels(config.depth), eps)
        self.decoders = nn.ModuleList(
            UpStage(config.stage_channels(k + 1), config.stage_channels(k), eps)
            for k in reversed(range(config.depth))
        )
        self.head = Head(config.base_channels, config.out_channels)

    def forward(self, x):
        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for decoder, skip in zip(self.decoders, reversed(skips)):
            x = decoder(x, skip)
        return self.head(x)


# ----------------------------------------------------------------------------
# Model state and the forward / backward contract
# ----------------------------------------------------------------------------

class ModelState:
    """Architecture config, named parameters and their gradients."""

    def __init__(self, config: UNetConfig, net: StrokeUNet):
        self.config = config
        self.net = net
        self._recorded_loss_owner = False

    @property
    def params(self) -> "OrderedDict[str, torch.Tensor]":
        return OrderedDict(self.net.named_parameters())

    @property
    def grads(self) -> "OrderedDict[str, torch.Tensor]":
        return OrderedDict(
            (name, p.grad if p.grad is not None else torch.zeros_like(p))
            for name, p in self.net.named_parameters()
        )

    @property
    def dtype(self) -> torch.dtype:
        return next(self.net.parameters()).dtype

    @property
    def device(self) -> torch.device:
        return next(self.net.parameters()).device

    def to(self, dtype: Optional[torch.dtype] = None, device: Optional[str] = None) -> "ModelState":
        """Move parameters in place (double precision is used by gradient checks)."""
        self.net.to(device=device, dtype=dtype)
        return self

    def zero_grads(self):
        for p in self.net.parameters():
            p.grad = torch.zeros_like(p)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())


def build_unet(config: UNetConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> ModelState:
    """Construct the network with He-normal conv weights, gamma=1, beta=0, zero biases."""
    net = StrokeUNet(config)
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("weight"):
                fan_in = p.shape[1] * p.shape[2] * p.shape[3]
                p.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=generator)
    net.to(dtype=dtype)
    state = ModelState(config, net)
    state.zero_grads()
    logger.debug(f"Built U-Net depth={config.depth} base={config.base_channels} "
                 f"({state.parameter_count()} parameters)")
    return state


def model_from_params(config: UNetConfig, params: Dict[str, Union[np.ndarray, torch.Tensor]]) -> ModelState:
    """Rebuild a model from a name -> tensor map (e.g. a loaded checkpoint)."""
    net = StrokeUNet(config)
    expected = OrderedDict(net.named_parameters())
    if list(expected) != list(params):
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        raise UNetShapeError(f"Parameter names do not match the architecture "
                             f"(missing={sorted(missing)}, unexpected={sorted(extra)})")
    with torch.no_grad():
        for name, p in expected.items():
            value = params[name]
            if not torch.is_tensor(value):
                value = torch.from_numpy(np.ascontiguousarray(value))
            if tuple(value.shape) != tuple(p.shape):
                raise UNetShapeError(f"{name}: expected shape {tuple(p.shape)}, got {tuple(value.shape)}")
            p.copy_(value)
    state = ModelState(config, net)
    state.zero_grads()
    return state


def forward(model: ModelState, x: Union[np.ndarray, torch.Tensor], record: bool = False) -> torch.Tensor:
    """Run the network on a (C,H,W) image or (N,C,H,W) batch.

    With ``record=True`` the autograd graph is kept for one :func:`backward`.
    """
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.ascontiguousarray(x))
    x = x.to(device=model.device, dtype=model.dtype)
    unbatched = x.dim() == 3
    if unbatched:
        x = x.unsqueeze(0)
    if x.dim() != 4:
        raise UNetShapeError(f"Expected C x H x W or N x C x H x W input, got {tuple(x.shape)}")
    if x.shape[1] != model.config.in_channels:
        raise UNetShapeError(f"Input has {x.shape[1]} channels, model expects {model.config.in_channels}")
    m = model.config.size_multiple
    if x.shape[2] % m or x.shape[3] % m:
        raise UNetShapeError(
            f"Input {x.shape[2]}x{x.shape[3]} is not divisible by {m} (2**depth); "
            f"pad it with pad_to_multiple(img, {m}) first"
        )

    with torch.set_grad_enabled(record):
        y = model.net(x)
    model._recorded_loss_owner = record
    return y.squeeze(0) if unbatched else y


def backward(model: ModelState, loss: torch.Tensor):
    """Populate ``model.grads`` with d(loss)/d(param) for the last recorded forward."""
    if not model._recorded_loss_owner or not loss.requires_grad:
        raise BackwardError("backward() needs a preceding forward(..., record=True)")
    if loss.dim() != 0:
        raise BackwardError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    for p in model.net.parameters():
        p.grad = None
    model._recorded_loss_owner = False
    loss.backward()
    for p in model.net.parameters():
        if p.grad is None:
            p.grad = torch.zeros_like(p)
