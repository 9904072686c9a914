"""Small fully-connected regression network with hand-written differentiation.

The forward pass, the gradient of the mean squared error, and an exact
Hessian-vector product are all coded directly against the layer structure.
The HVP propagates a parameter-space tangent through the forward AND the
backward pass (forward-over-reverse), which is what unrolled second-order
meta-gradients need; rectifier masks are treated as locally constant, exact
almost everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass
class MlpParams:
    """Weights and biases per layer; activation is a rectifier throughout."""

    weights: list  # weights[i]: (fan_in, fan_out)
    biases: list  # biases[i]: (fan_out,)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def like_from_flat(self, vec) -> "MlpParams":
        """Unflatten ``vec`` into the same layer shapes as self."""
        arrays = []
        offset = 0
        for ref in self.weights + self.biases:
            arrays.append(np.asarray(vec[offset : offset + ref.size]).reshape(ref.shape))
            offset += ref.size
        n = len(self.weights)
        return MlpParams(arrays[:n], arrays[n:])

    def axpy(self, alpha: float, other: "MlpParams") -> "MlpParams":
        """self + alpha * other, elementwise over all layers."""
        return MlpParams(
            [w + alpha * o for w, o in zip(self.weights, other.weights)],
            [b + alpha * o for b, o in zip(self.biases, other.biases)],
        )


def init_mlp(rng: np.random.Generator, in_dim: int = 1, hidden=(40, 40),
             out_dim: int = 1) -> MlpParams:
    """Glorot-scaled Gaussian init; keeps inner-loop gradient descent stable
    on wide-domain inputs."""
    sizes = [in_dim, *hidden, out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _as_batch(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatch(f"expected inputs of dimension {dim}")
    return x, single


def mlp_forward(p: MlpParams, x):
    """Deterministic forward pass; accepts one vector or a (B, in_dim) batch."""
    x, single = _as_batch(x, p.in_dim)
    a = x
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < last else z
    return a[0] if single else a


def mlp_loss(p: MlpParams, x, y) -> float:
    out = mlp_forward(p, x)
    y = np.asarray(y, dtype=float).reshape(out.shape)
    return float(np.mean(np.sum((out - y) ** 2, axis=-1)))


def _forward_trace(p: MlpParams, x):
    """Forward pass keeping pre/post activations for the backward pass."""
    activations = [x]
    zs = []
    a = x
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w + b
        zs.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        activations.append(a)
    return zs, activations


def mlp_grad(p: MlpParams, x, y) -> MlpParams:
    """Exact gradient of the mean squared error over the batch."""
    grad, _ = mlp_loss_grad(p, x, y)
    return grad


def mlp_loss_grad(p: MlpParams, x, y) -> tuple[MlpParams, float]:
    x, _ = _as_batch(x, p.in_dim)
    y = np.asarray(y, dtype=float).reshape(x.shape[0], p.out_dim)
    zs, acts = _forward_trace(p, x)
    batch = x.shape[0]
    diff = acts[-1] - y
    loss = float(np.mean(np.sum(diff**2, axis=-1)))
    delta = 2.0 * diff / batch
    g_w = [None] * len(p.weights)
    g_b = [None] * len(p.biases)
    for i in range(len(p.weights) - 1, -1, -1):
        g_w[i] = acts[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ p.weights[i].T) * (zs[i - 1] > 0.0)
    return MlpParams(g_w, g_b), loss


def mlp_grad_hvp(p: MlpParams, x, y, v: MlpParams) -> tuple[MlpParams, MlpParams]:
    """Gradient and exact Hessian-vector product H(p) @ v for the batch MSE.

    The tangent of every intermediate of the forward pass is carried along
    (direction ``v`` in parameter space), then the tangent of the backward
    pass is accumulated, yielding d/dt grad(p + t v) at t = 0.
    """
    x, _ = _as_batch(x, p.in_dim)
    y = np.asarray(y, dtype=float).reshape(x.shape[0], p.out_dim)
    batch = x.shape[0]
    last = len(p.weights) - 1

    acts = [x]
    tacts = [np.zeros_like(x)]
    masks = []
    a, ta = x, np.zeros_like(x)
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w + b
        tz = ta @ w + a @ v.weights[i] + v.biases[i]
        if i < last:
            mask = z > 0.0
            masks.append(mask)
            a, ta = z * mask, tz * mask
        else:
            a, ta = z, tz
        acts.append(a)
        tacts.append(ta)

    delta = 2.0 * (acts[-1] - y) / batch
    tdelta = 2.0 * tacts[-1] / batch
    g_w = [None] * len(p.weights)
    g_b = [None] * len(p.biases)
    h_w = [None] * len(p.weights)
    h_b = [None] * len(p.biases)
    for i in range(last, -1, -1):
        g_w[i] = acts[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        h_w[i] = tacts[i].T @ delta + acts[i].T @ tdelta
        h_b[i] = tdelta.sum(axis=0)
        if i > 0:
            tdelta = (tdelta @ p.weights[i].T + delta @ v.weights[i].T) * masks[i - 1]
            delta = (delta @ p.weights[i].T) * masks[i - 1]
    return MlpParams(g_w, g_b), MlpParams(h_w, h_b)
