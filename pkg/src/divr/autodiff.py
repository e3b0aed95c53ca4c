"""Reverse-mode automatic differentiation on float64 numpy arrays.

A small tape: each ``Tensor`` produced by an op keeps its parents and a
vector-Jacobian callback.  Everything runs in 64-bit, which is what makes
the finite-difference gradient verification meaningful.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np
from scipy.special import erf as _erf

_grad_enabled = True


class no_grad:
    """Context manager disabling tape construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # operators ------------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a tape op")
        return mul(self, _wrap(1.0 / other))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return take(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def custom(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Build a tape node from an externally computed forward result."""
    return _make(np.asarray(data, dtype=np.float64), parents, vjp)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + _erf(x.data / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
    return _make(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


def absolute(x: Tensor) -> Tensor:
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


# shape ----------------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _make(
        x.data.reshape(shape), (x,), lambda g: (g.reshape(x.data.shape),)
    )


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return _make(
        np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),)
    )


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


def take(x: Tensor, key) -> Tensor:
    fancy = isinstance(key, np.ndarray) or (
        isinstance(key, tuple) and any(isinstance(k, np.ndarray) for k in key)
    )

    def vjp(g):
        gx = np.zeros_like(x.data)
        if fancy:
            np.add.at(gx, key, g)
        else:
            gx[key] += g
        return (gx,)

    return _make(x.data[key], (x,), vjp)


def tile_rows(x: Tensor, n: int) -> Tensor:
    """Repeat a (D,) vector into an (n, D) array."""
    return _make(
        np.tile(x.data, (n, 1)), (x,), lambda g: (g.sum(axis=0),)
    )


# reductions -----------------------------------------------------------


def _expand(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape).copy()


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _make(
        x.data.sum(axis=axis, keepdims=keepdims),
        (x,),
        lambda g: (_expand(g, x.data.shape, axis, keepdims),),
    )


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    denom = (
        x.data.size
        if axis is None
        else np.prod(
            [x.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
    )
    return _make(
        x.data.mean(axis=axis, keepdims=keepdims),
        (x,),
        lambda g: (_expand(g, x.data.shape, axis, keepdims) / denom,),
    )


def amax(x: Tensor, axis: int) -> Tensor:
    idx = np.argmax(x.data, axis=axis)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(
            gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis
        )
        return (gx,)

    return _make(np.max(x.data, axis=axis), (x,), vjp)


def masked_max(x: Tensor, mask: np.ndarray) -> Tensor:
    """Max over axis -2 of ``x`` keeping only entries where ``mask`` is True.

    ``x`` has shape (..., K, F) and ``mask`` shape (..., K); every row must
    have at least one valid entry.  Ties route the gradient to the first
    winner, matching ``np.argmax``.
    """
    filled = np.where(mask[..., None], x.data, -np.inf)
    idx = np.argmax(filled, axis=-2)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[..., None, :], g[..., None, :], axis=-2)
        return (gx,)

    return _make(np.max(filled, axis=-2), (x,), vjp)


# linear algebra & normalization ----------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _make(a.data @ b.data, (a, b), vjp)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - inner),)

    return _make(p, (x,), vjp)


def layer_norm_core(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - mu) * inv

    def vjp(g):
        n = x.data.shape[-1]
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _make(y, (x,), vjp)


# tape traversal ---------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable tensor."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad += g
        if node is not loss:
            node.grad = None


class Parameters:
    """Named collection of trainable arrays with gradient slots."""

    def __init__(self):
        self._store: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._store:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._store[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._store[name]

    def __contains__(self, name: str) -> bool:
        return name in self._store

    def __len__(self) -> int:
        return len(self._store)

    def names(self) -> list[str]:
        return list(self._store)

    def items(self):
        return self._store.items()

    def zero_grad(self) -> None:
        for t in self._store.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._store.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._store):
            missing = set(self._store) ^ set(state)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for k, v in state.items():
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != self._store[k].data.shape:
                raise ValueError(
                    f"shape mismatch for {k!r}: {arr.shape} vs {self._store[k].data.shape}"
                )
            self._store[k].data = arr.copy()

    def n_scalars(self) -> int:
        return sum(t.data.size for t in self._store.values())


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Parameters,
    eps: float = 1e-4,
    max_entries_per_tensor: int = 6,
    seed: int = 0,
) -> dict[str, float]:
    """Compare backprop gradients against central finite differences.

    Every named parameter is covered; within each tensor a deterministic
    sample of at most ``max_entries_per_tensor`` entries is probed (all of
    them when the tensor is small).  Returns per-name worst relative error
    ``|a - n| / max(|a| + |n|, 1e-3)``.
    """
    params.zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    params.zero_grad()

    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    for name, t in params.items():
        flat = t.data.reshape(-1)
        size = flat.size
        if size <= max_entries_per_tensor:
            entries = np.arange(size)
        else:
            entries = rng.choice(size, size=max_entries_per_tensor, replace=False)
        worst = 0.0
        for j in entries:
            orig = flat[j]
            flat[j] = orig + eps
            with no_grad():
                up = loss_fn().item()
            flat[j] = orig - eps
            with no_grad():
                down = loss_fn().item()
            flat[j] = orig
            numeric = (up - down) / (2.0 * eps)
            a = analytic[name].reshape(-1)[j]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-3)
            worst = max(worst, rel)
        errors[name] = worst
    return errors
