"""Best-response network b(x, uL; w): 7 -> 50 -> 50 -> 2, ReLU, tanh output.

Parameters live in one flat float64 vector so SGD steps, meta updates and
parameter averaging are plain vector arithmetic. Inputs are the joint state
and the leader control, normalized before the first layer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dynamics import U_MAX

ARCH = (7, 50, 50, 2)
POS_SCALE = 10.0


def _layout(arch=ARCH):
    offset, out = 0, []
    for n_in, n_out in zip(arch[:-1], arch[1:]):
        out.append((offset, (n_in, n_out), offset + n_in * n_out, n_out))
        offset += n_in * n_out + n_out
    return out, offset


_LAYOUT, N_PARAMS = _layout()


@dataclass(frozen=True)
class MlpParams:
    """Immutable flat parameter vector plus the leader-control scale."""

    flat: np.ndarray
    u_max: float = U_MAX
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64).ravel()
        if flat.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters for architecture {list(ARCH)}, got {flat.size}")
        flat.flags.writeable = False
        object.__setattr__(self, "flat", flat)

    def layers(self):
        """[(W, b), ...] as read-only views; W has shape (n_in, n_out)."""
        return [(self.flat[w0:w0 + a * b].reshape(a, b), self.flat[b0:b0 + nb])
                for w0, (a, b), b0, nb in _LAYOUT]

    @property
    def input_scale(self) -> np.ndarray:
        return np.array([POS_SCALE] * 4 + [np.pi] + [self.u_max] * 2)

    def replace(self, flat) -> "MlpParams":
        return MlpParams(flat, self.u_max, dict(self.meta))

    def __add__(self, other):
        return self.replace(self.flat + _flat(other))

    def __sub__(self, other):
        return self.replace(self.flat - _flat(other))

    def __mul__(self, s):
        return self.replace(self.flat * s)

    __rmul__ = __mul__


class BrSample(NamedTuple):
    state: np.ndarray
    leader_control: np.ndarray
    response: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Best-response triples stored column-wise: (N, 5), (N, 2), (N, 2)."""

    states: np.ndarray
    leader_controls: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        for name, arr, width in (("states", self.states, 5), ("leader_controls", self.leader_controls, 2),
                                 ("responses", self.responses, 2)):
            arr = np.asarray(arr, dtype=float).reshape(-1, width)
            if len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} rows, expected {n}")
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return BrSample(self.states[idx], self.leader_controls[idx], self.responses[idx])
        return Dataset(self.states[idx], self.leader_controls[idx], self.responses[idx])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        return cls(np.array([s.state for s in samples]).reshape(-1, 5),
                   np.array([s.leader_control for s in samples]).reshape(-1, 2),
                   np.array([s.response for s in samples]).reshape(-1, 2))

    @classmethod
    def concat(cls, parts) -> "Dataset":
        parts = list(parts)
        return cls(np.concatenate([p.states for p in parts]),
                   np.concatenate([p.leader_controls for p in parts]),
                   np.concatenate([p.responses for p in parts]))

    def as_array(self) -> np.ndarray:
        return np.hstack([self.states, self.leader_controls, self.responses])


def _flat(v):
    return v.flat if isinstance(v, MlpParams) else np.asarray(v, dtype=float)


def init_params(rng: np.random.Generator, u_max: float = U_MAX) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    flat = np.empty(N_PARAMS)
    for w0, (a, b), b0, nb in _LAYOUT:
        bound = 1.0 / np.sqrt(a)
        flat[w0:w0 + a * b] = rng.uniform(-bound, bound, a * b)
        flat[b0:b0 + nb] = rng.uniform(-bound, bound, nb)
    return MlpParams(flat, u_max)


def zeros(u_max: float = U_MAX) -> MlpParams:
    return MlpParams(np.zeros(N_PARAMS), u_max)


def _inputs(w: MlpParams, x, uL) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    uL = np.atleast_2d(np.asarray(uL, dtype=float))
    return np.concatenate([x, np.broadcast_to(uL, (len(x), 2))], axis=1) / w.input_scale


def _check_finite(w: MlpParams):
    if not np.all(np.isfinite(w.flat)):
        raise ValueError("network parameters contain non-finite values")


def _forward_cache(w: MlpParams, inp):
    (W1, b1), (W2, b2), (W3, b3) = w.layers()
    z1 = inp @ W1 + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ W2 + b2
    a2 = np.maximum(z2, 0.0)
    y = np.tanh(a2 @ W3 + b3)
    return z1, a1, z2, a2, y


def forward(w: MlpParams, x, uL) -> np.ndarray:
    """Predicted follower controls, shape (N, 2), each entry in (-1, 1).

    x is one joint state or an (N, 5) batch; uL is (2,) or (N, 2).
    """
    _check_finite(w)
    single = np.ndim(x) == 1
    y = _forward_cache(w, _inputs(w, x, uL))[-1]
    return y[0] if single else y


def task_loss(w: MlpParams, data) -> float:
    """Mean over samples of the squared Euclidean prediction error."""
    if len(data) == 0:
        raise ValueError("task_loss needs at least one sample")
    r = forward(w, data.states, data.leader_controls) - data.responses
    return float(np.sum(r * r) / len(data))


def loss_and_grad(w: MlpParams, data) -> tuple[float, np.ndarray]:
    if len(data) == 0:
        raise ValueError("loss_grad needs at least one sample")
    _check_finite(w)
    (W1, _), (W2, _), (W3, _) = w.layers()
    inp = _inputs(w, data.states, data.leader_controls)
    z1, a1, z2, a2, y = _forward_cache(w, inp)
    n = len(inp)
    r = y - data.responses
    dz3 = (2.0 / n) * r * (1.0 - y * y)
    dz2 = (dz3 @ W3.T) * (z2 > 0)
    dz1 = (dz2 @ W2.T) * (z1 > 0)
    grads = [(inp.T @ dz1, dz1.sum(0)), (a1.T @ dz2, dz2.sum(0)), (a2.T @ dz3, dz3.sum(0))]
    g = np.empty(N_PARAMS)
    for (w0, (a, b), b0, nb), (gW, gb) in zip(_LAYOUT, grads):
        g[w0:w0 + a * b] = gW.ravel()
        g[b0:b0 + nb] = gb
    return float(np.sum(r * r) / n), g


def loss_grad(w: MlpParams, data) -> np.ndarray:
    """Exact gradient of task_loss with respect to the flat parameters."""
    return loss_and_grad(w, data)[1]


def forward_and_jacobian(w: MlpParams, x, uL):
    """Outputs (N, 2) and their Jacobians (N, 2, 7) w.r.t. the raw [x, uL]."""
    _check_finite(w)
    (W1, _), (W2, _), (W3, _) = w.layers()
    z1, a1, z2, a2, y = _forward_cache(w, _inputs(w, x, uL))
    d3 = (1.0 - y * y)[:, :, None] * W3.T[None]            # (N, 2, 50)
    d2 = (d3 * (z2 > 0)[:, None, :]) @ W2.T                 # (N, 2, 50)
    d1 = (d2 * (z1 > 0)[:, None, :]) @ W1.T                 # (N, 2, 7)
    return y, d1 / w.input_scale


def input_grad(w: MlpParams, x, uL) -> np.ndarray:
    """Jacobian of the output with respect to (x, uL); (2, 7) for one query."""
    single = np.ndim(x) == 1
    jac = forward_and_jacobian(w, x, uL)[1]
    return jac[0] if single else jac


def sgd_step(w: MlpParams, grad, step: float) -> MlpParams:
    return w.replace(w.flat - step * _flat(grad))


def save_checkpoint(w: MlpParams, path, **meta) -> None:
    info = {**w.meta, **meta, "u_max": w.u_max}
    layers = w.layers()
    payload = {
        "arch": list(ARCH),
        "weights": [W.tolist() for W, _ in layers],
        "biases": [b.tolist() for _, b in layers],
        "meta": info,
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> MlpParams:
    payload = json.loads(Path(path).read_text())
    if list(payload.get("arch", [])) != list(ARCH):
        raise ValueError(f"{path}: architecture {payload.get('arch')} does not match {list(ARCH)}")
    weights, biases = payload["weights"], payload["biases"]
    if len(weights) != len(_LAYOUT) or len(biases) != len(_LAYOUT):
        raise ValueError(f"{path}: expected {len(_LAYOUT)} layers")
    flat = np.empty(N_PARAMS)
    for (w0, shape, b0, nb), W, b in zip(_LAYOUT, weights, biases):
        W = np.asarray(W, dtype=float)
        b = np.asarray(b, dtype=float)
        if W.shape != shape or b.shape != (nb,):
            raise ValueError(f"{path}: layer shape {W.shape}/{b.shape} does not match {shape}/{(nb,)}")
        flat[w0:w0 + W.size] = W.ravel()
        flat[b0:b0 + nb] = b
    meta = dict(payload.get("meta", {}))
    w = MlpParams(flat, float(meta.get("u_max", U_MAX)), meta)
    _check_finite(w)
    return w
