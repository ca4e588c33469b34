"""Small fully connected network engine in plain numpy.

ReLU on hidden layers, identity on the output. The same parameter container
serves the beam classifier (softmax + cross-entropy head) and the Q-network
(squared TD-error head on one output). Batched gradients are batch means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

FORMAT_NAME = "sensebeam-mlp"
FORMAT_VERSION = 1


@dataclass
class MLPParams:
    weights: list[np.ndarray]  # weights[l] has shape (sizes[l+1], sizes[l])
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved in declaration order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MLPParams":
        return MLPParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])

    def equals(self, other: "MLPParams") -> bool:
        """Bitwise equality of every array."""
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))

    def check_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def mlp_init(layer_sizes, seed: int) -> MLPParams:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights, biases)


def _as_batch(params: MLPParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != params.d_in:
        raise ValueError(f"input has shape {x.shape}, network expects {params.d_in} features")
    return xb, single


def _forward_cache(params: MLPParams, xb: np.ndarray) -> list[np.ndarray]:
    acts = [xb]
    a = xb
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if l == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def forward(params: MLPParams, x) -> np.ndarray:
    """Logits for one input vector or a (B, d_in) batch."""
    xb, single = _as_batch(params, x)
    z = _forward_cache(params, xb)[-1]
    return z[0] if single else z


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def cross_entropy(p, label: int) -> float:
    p = np.asarray(p, dtype=float)
    if not 0 <= label < p.shape[-1]:
        raise ValueError(f"label {label} outside [0, {p.shape[-1]})")
    return float(-np.log(p[label]))


def _backprop(params: MLPParams, acts: list[np.ndarray], dz: np.ndarray) -> MLPParams:
    """Propagate dLoss/dlogits (already batch-scaled) back through the net."""
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for l in range(n - 1, -1, -1):
        gw[l] = dz.T @ acts[l]
        gb[l] = dz.sum(axis=0)
        if l:
            dz = (dz @ params.weights[l]) * (acts[l] > 0)
    return MLPParams(gw, gb)


def backward(params: MLPParams, x, label) -> tuple[MLPParams, float]:
    """Gradients of the mean softmax cross-entropy, plus the loss itself."""
    xb, _ = _as_batch(params, x)
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if labels.shape != (xb.shape[0],):
        raise ValueError("need one label per input row")
    if np.any(labels < 0) or np.any(labels >= params.d_out):
        raise ValueError(f"labels must lie in [0, {params.d_out})")
    acts = _forward_cache(params, xb)
    logp = log_softmax(acts[-1])
    rows = np.arange(len(labels))
    loss = float(-logp[rows, labels].mean())
    dz = np.exp(logp)
    dz[rows, labels] -= 1.0
    dz /= len(labels)
    return _backprop(params, acts, dz), loss


def backward_regression(params: MLPParams, x, target, active_output) -> tuple[MLPParams, float]:
    """Gradients of the mean of 0.5 * (out[active] - target)^2.

    Only the selected output of each row receives error, so the other heads
    get exactly zero gradient in the output layer.
    """
    xb, _ = _as_batch(params, x)
    B = xb.shape[0]
    actions = np.broadcast_to(np.asarray(active_output, dtype=np.int64), (B,))
    targets = np.broadcast_to(np.asarray(target, dtype=float), (B,))
    if np.any(actions < 0) or np.any(actions >= params.d_out):
        raise ValueError(f"active output must lie in [0, {params.d_out})")
    acts = _forward_cache(params, xb)
    rows = np.arange(B)
    err = acts[-1][rows, actions] - targets
    dz = np.zeros_like(acts[-1])
    dz[rows, actions] = err / B
    return _backprop(params, acts, dz), float(0.5 * np.mean(err**2))


@numba.njit(fastmath=True, cache=True)
def _adam_kernel(p, g, m, v, b1, b2, c1, c2, lr, eps):  # pragma: no cover - compiled
    # single fused pass; the 1024x1024 layer makes separate numpy passes memory bound
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


@dataclass
class AdamState:
    m: MLPParams
    v: MLPParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MLPParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like())

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(params: MLPParams, grads: MLPParams, state: AdamState, lr: float) -> tuple[MLPParams, AdamState]:
    """Bias-corrected Adam update. Mutates ``params`` and ``state`` in place and returns them."""
    ps, gs, ms, vs = params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()
    if len(ps) != len(gs) or any(p.shape != g.shape for p, g in zip(ps, gs)):
        raise ValueError("gradient shapes do not match parameter shapes")
    if any(p.shape != m.shape for p, m in zip(ps, ms)):
        raise ValueError("optimizer state shapes do not match parameter shapes")
    if not all(a.flags.c_contiguous for a in ps + ms + vs):
        raise ValueError("parameters and optimizer state must be C-contiguous")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(ps, gs, ms, vs):
        _adam_kernel(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
                     state.beta1, state.beta2, c1, c2, lr, state.eps)
    return params, state


def _loss(params: MLPParams, x, label, target) -> float:
    if target is None:
        return backward(params, x, label)[1]
    xb, _ = _as_batch(params, x)
    out = forward(params, xb)
    rows = np.arange(xb.shape[0])
    a = np.broadcast_to(np.asarray(label), (xb.shape[0],))
    return float(0.5 * np.mean((out[rows, a] - np.broadcast_to(target, (xb.shape[0],))) ** 2))


def finite_diff_check(params: MLPParams, x, label, h: float = 1e-5, target=None) -> float:
    """Max relative error between backprop and central differences over every parameter.

    With ``target=None`` the cross-entropy head is checked against ``label``;
    otherwise the squared-error head on output ``label`` against ``target``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    if target is None:
        grads, _ = backward(params, x, label)
    else:
        grads, _ = backward_regression(params, x, target, label)
    probe = params.copy()
    worst = 0.0
    for p, g in zip(probe.arrays(), grads.arrays()):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = _loss(probe, x, label, target)
            flat[i] = orig - h
            down = _loss(probe, x, label, target)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1e-12, abs(gflat[i]) + abs(fd))
            worst = max(worst, err)
    return worst


def params_to_dict(params: MLPParams) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "layer_sizes": params.layer_sizes,
        "weights": [w.reshape(-1).tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(d: dict) -> MLPParams:
    if d.get("format") != FORMAT_NAME or d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported parameter file: format={d.get('format')!r} version={d.get('version')!r}")
    sizes = d["layer_sizes"]
    weights = [np.array(w, dtype=float).reshape(o, i) for w, i, o in zip(d["weights"], sizes[:-1], sizes[1:])]
    biases = [np.array(b, dtype=float) for b in d["biases"]]
    return MLPParams(weights, biases)


def params_to_arrays(params: MLPParams, prefix: str = "") -> dict[str, np.ndarray]:
    out = {f"{prefix}layer_sizes": np.array(params.layer_sizes, dtype=np.int64)}
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}W{l}"] = w
        out[f"{prefix}b{l}"] = b
    return out


def params_from_arrays(arrs, prefix: str = "") -> MLPParams:
    n = len(arrs[f"{prefix}layer_sizes"]) - 1
    return MLPParams([np.array(arrs[f"{prefix}W{l}"], dtype=float) for l in range(n)],
                     [np.array(arrs[f"{prefix}b{l}"], dtype=float) for l in range(n)])


def save_params(params: MLPParams, path) -> None:
    """Write ``.json`` (full-precision text) or ``.npz`` (binary); both round-trip bit-exactly."""
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(params_to_dict(params)), encoding="utf-8")
    else:
        with path.open("wb") as f:
            np.savez(f, format=np.array(FORMAT_NAME), version=np.array(FORMAT_VERSION),
                     **params_to_arrays(params))


def load_params(path) -> MLPParams:
    path = Path(path)
    if path.suffix == ".json":
        return params_from_dict(json.loads(path.read_text(encoding="utf-8")))
    with np.load(path) as z:
        if str(z["format"]) != FORMAT_NAME or int(z["version"]) != FORMAT_VERSION:
            raise ValueError(f"{path}: not a {FORMAT_NAME} v{FORMAT_VERSION} file")
        return params_from_arrays(z)
