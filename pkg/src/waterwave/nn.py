"""Parameter storage, small MLPs, Adam, and a finite-difference gradient check.

Parameters live in named flat segments (float32 by default) exposed as
autodiff leaf Tensors; gradients accumulate in float64 on the leaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DataError, NumericalError


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully connected head."""

    in_dim: int
    hidden: tuple[int, ...] = (64, 64)
    out_dim: int = 3
    final: str = "sigmoid"  # 'sigmoid' or 'linear'

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.in_dim, *self.hidden, self.out_dim]
        return list(zip(dims[:-1], dims[1:]))


class ParamStore:
    """Named parameter segments with per-segment float64 gradient accumulators."""

    def __init__(self):
        self._params: dict[str, ad.Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> ad.Tensor:
        if name in self._params:
            raise DataError(f"duplicate parameter segment {name!r}")
        t = ad.Tensor(np.asarray(value), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> ad.Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None
            t._grad_borrowed = False

    def values_dict(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            t = self._params[k]
            if t.value.shape != v.shape:
                raise DataError(f"segment {k!r} shape {v.shape} != expected {t.value.shape}")
            t.value = np.asarray(v, dtype=t.value.dtype)

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for k, v in self._params.items():
            out.add(k, v.value.astype(dtype))
        return out

    def total_size(self) -> int:
        return sum(int(v.value.size) for v in self._params.values())


def init_mlp(store: ParamStore, prefix: str, spec: MlpSpec, rng: np.random.Generator,
             dtype=np.float32, zero_last: bool = False) -> None:
    """He-initialized weights, zero biases; optionally zero the final layer.

    Zeroing the last layer makes residual heads start as the identity mapping.
    """
    layers = spec.layer_dims()
    for i, (fan_in, fan_out) in enumerate(layers):
        last = i == len(layers) - 1
        if last and zero_last:
            w = np.zeros((fan_in, fan_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        store.add(f"{prefix}/w{i}", w.astype(dtype))
        store.add(f"{prefix}/b{i}", np.zeros(fan_out, dtype=dtype))


def mlp_forward(store: ParamStore, prefix: str, spec: MlpSpec, x):
    """Run the MLP on a (B, in_dim) batch; ReLU between layers, `spec.final` head."""
    n = len(spec.layer_dims())
    for i in range(n):
        x = ad.affine(x, store[f"{prefix}/w{i}"], store[f"{prefix}/b{i}"])
        if i < n - 1:
            x = ad.relu(x)
    if spec.final == "sigmoid":
        return ad.sigmoid(x)
    if spec.final == "linear":
        return x
    raise DataError(f"unknown final activation {spec.final!r}")


@dataclass
class AdamState:
    """First/second moment estimates (float64) plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update over every segment with a gradient."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, t in store.items():
        g = t.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in segment {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros(t.value.shape, dtype=np.float64)
            state.v[name] = np.zeros(t.value.shape, dtype=np.float64)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        t.value = (t.value.astype(np.float64) - update).astype(t.value.dtype)


def gradient_check(build_loss, store: ParamStore, rng: np.random.Generator,
                   probes: int = 100, step: float = 1e-4) -> float:
    """Compare reverse-mode gradients with central finite differences.

    `build_loss(store)` must construct the loss graph from scratch.  The store
    is promoted to float64 for the check.  Probes whose +/-step evaluations
    land on a different linear piece (ReLU/abs sign flips, bilinear cell or
    mask changes) are resampled, since the finite difference is meaningless
    across a kink.  Returns the max relative error over accepted probes.
    """
    work = store.astype(np.float64)
    sig0: list = []
    with ad.record_kinks(sig0):
        loss = build_loss(work)
    ad.backward(loss)
    grads = {k: (np.zeros_like(v.value) if v.grad is None else v.grad.copy())
             for k, v in work.items()}

    def eval_at(name, idx, value):
        t = work[name]
        old = t.value[idx]
        t.value[idx] = value
        sig: list = []
        with ad.record_kinks(sig):
            out = float(build_loss(work).value)
        t.value[idx] = old
        return out, sig

    names = work.names()
    sizes = np.array([work[n].value.size for n in names], dtype=np.float64)
    pick_p = sizes / sizes.sum()
    worst = 0.0
    accepted = 0
    attempts = 0
    while accepted < probes:
        attempts += 1
        if attempts > probes * 20:
            raise NumericalError("gradient check could not find enough kink-free probes")
        name = names[rng.choice(len(names), p=pick_p)]
        t = work[name]
        idx = np.unravel_index(rng.integers(t.value.size), t.value.shape)
        base = float(t.value[idx])
        lo, sig_lo = eval_at(name, idx, base - step)
        hi, sig_hi = eval_at(name, idx, base + step)
        if not (ad.same_kinks(sig_lo, sig0) and ad.same_kinks(sig_hi, sig0)):
            continue
        fd = (hi - lo) / (2.0 * step)
        an = float(grads[name][idx])
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        worst = max(worst, rel)
        accepted += 1
    return worst
