"""Parameters, a small module system, spectral normalization and Adam."""

from __future__ import annotations

import contextlib
from typing import Iterator, Optional

import numpy as np

from . import functional as F
from .tensor import DEFAULT_DTYPE, Tensor, clamp_min, is_grad_enabled, sum_


class Parameter(Tensor):
    """Trainable tensor carrying its own Adam moments and power-iteration state."""

    def __init__(self, data, requires_grad: bool = True, dtype=DEFAULT_DTYPE):
        super().__init__(np.array(data, dtype=dtype), requires_grad=requires_grad)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0
        self.spectral_u: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape}, dtype={self.dtype})"


# ------------------------------------------------------ spectral normalization
def _unit(v: np.ndarray) -> Optional[np.ndarray]:
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm < 1e-12:
        return None
    return v / norm


def spectral_normalize(weight: Parameter, n_iters: int = 1, eps: float = 1e-5,
                       update: bool = True) -> Tensor:
    """Divide ``weight`` by a power-iteration estimate of its largest singular value.

    The weight is viewed as ``out_c x (in_c*k*k)``. ``spectral_u`` persists
    across calls so one iteration per training step suffices; ``update=False``
    iterates on a copy and leaves the stored vector untouched. Gradients treat
    the singular vectors as constants.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be positive")
    mat = weight.data.reshape(weight.shape[0], -1).astype(np.float64)
    u = weight.spectral_u
    if u is None:
        u = np.ones(mat.shape[0]) / np.sqrt(mat.shape[0])
    u = u.astype(np.float64)
    v = None
    for _ in range(n_iters):
        v_new = _unit(mat.T @ u)
        if v_new is None:
            break
        u_new = _unit(mat @ v_new)
        if u_new is None:
            break
        v, u = v_new, u_new
    if update:
        weight.spectral_u = u.astype(weight.dtype)
    if v is None:
        v = np.zeros(mat.shape[1])
    outer = np.outer(u, v).reshape(weight.shape).astype(weight.dtype)
    sigma = clamp_min(sum_(weight * outer), eps)
    return weight / sigma


# ---------------------------------------------------------------- modules
class Module:
    """Container that discovers parameters and sub-modules from attributes."""

    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item
            elif isinstance(value, dict):
                for key, item in value.items():
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{key}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(prefix=full + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        """Cast every parameter (and its optimizer state) in place."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.adam_m = p.adam_m.astype(dtype)
            p.adam_v = p.adam_v.astype(dtype)
            if p.spectral_u is not None:
                p.spectral_u = p.spectral_u.astype(dtype)
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


@contextlib.contextmanager
def frozen(*modules: Module):
    """Temporarily stop gradients from reaching the modules' parameters."""
    params = [p for m in modules for p in m.parameters()]
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


def kaiming_normal(rng: np.random.Generator, shape: tuple, slope: float = 0.2) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    std = np.sqrt(2.0 / ((1.0 + slope ** 2) * fan_in))
    return rng.normal(0.0, std, size=shape)


class Conv2d(Module):
    """Square-kernel convolution, optionally spectrally normalized."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 stride: int = 1, padding: Optional[int] = None, *,
                 rng: np.random.Generator, bias: bool = True, spectral: bool = False,
                 power_iters: int = 1, trainable: bool = True):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.spectral = spectral
        self.power_iters = power_iters
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_normal(rng, shape), requires_grad=trainable)
        self.bias = Parameter(np.zeros(out_channels), requires_grad=trainable) if bias else None
        if spectral:
            u = rng.normal(size=out_channels)
            self.weight.spectral_u = (u / np.linalg.norm(u)).astype(DEFAULT_DTYPE)

    def effective_weight(self) -> Tensor:
        if not self.spectral:
            return self.weight
        update = self.training and is_grad_enabled()
        return spectral_normalize(self.weight, self.power_iters, update=update)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.effective_weight(), self.bias, self.stride, self.padding)


def set_power_iters(module: Module, n_iters: int) -> None:
    for m in module.modules():
        if isinstance(m, Conv2d):
            m.power_iters = n_iters


# ------------------------------------------------------------------- Adam
def adam_step(params, lr: float, beta1: float = 0.5, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update in place; clears the gradients."""
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {p.name or p.shape} has no gradient")
    for p in params:
        g = p.grad.astype(p.dtype, copy=False)
        p.step_count += 1
        t = p.step_count
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
        p.adam_m = p.adam_m.astype(p.dtype, copy=False)
        p.adam_v = p.adam_v.astype(p.dtype, copy=False)
        p.grad = None


class Adam:
    """Holds hyperparameters for :func:`adam_step` over a fixed parameter list."""

    def __init__(self, params, lr: float, betas=(0.5, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps

    def step(self) -> None:
        adam_step(self.params, self.lr, self.betas[0], self.betas[1], self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
