"""Small fully-connected classifiers with hand-written backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

ACTIVATIONS = ("sigmoid", "relu", "softmax", "none")
LOG_FLOOR = 1e-12

Params = List[Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class DenseNet:
    dims: Tuple[int, ...]
    activations: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise ValueError("need at least input and output widths, all >= 1")
        if len(self.activations) != len(self.dims) - 1:
            raise ValueError("one activation per layer")
        for i, a in enumerate(self.activations):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
            if a == "softmax" and i != len(self.activations) - 1:
                raise ValueError("softmax is only allowed on the last layer")

    @property
    def num_layers(self) -> int:
        return len(self.activations)

    @property
    def num_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.dims[:-1], self.dims[1:]))

    def describe(self) -> str:
        return f"dims={','.join(map(str, self.dims))} acts={','.join(self.activations)}"


def init_params(net: DenseNet, rng: np.random.Generator) -> Params:
    """Uniform fan-in scaled weights, zero biases."""
    params = []
    for fan_in, fan_out in zip(net.dims[:-1], net.dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append((rng.uniform(-bound, bound, (fan_in, fan_out)), np.zeros(fan_out)))
    return params


def copy_params(params: Params) -> Params:
    return [(w.copy(), b.copy()) for w, b in params]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_input(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if net.dims[0] == 1 else x[None, :]
    if x.shape[1] != net.dims[0]:
        raise ValueError(f"input width {x.shape[1]} != {net.dims[0]}")
    return x


def _hidden_pass(net: DenseNet, params: Params, x: np.ndarray):
    """Returns layer inputs and the final pre-activation."""
    acts = [x]
    h = x
    for (w, b), a in zip(params[:-1], net.activations[:-1]):
        z = h @ w + b
        if a == "sigmoid":
            h = _sigmoid(z)
        elif a == "relu":
            h = np.maximum(z, 0.0)
        else:
            h = z
        acts.append(h)
    w, b = params[-1]
    return acts, h @ w + b


def forward(net: DenseNet, params: Params, inputs) -> np.ndarray:
    """Class probabilities (or raw outputs when the last layer is not softmax)."""
    x = _check_input(net, inputs)
    _, z = _hidden_pass(net, params, x)
    last = net.activations[-1]
    if last == "softmax":
        return np.exp(_log_softmax(z))
    if last == "sigmoid":
        return _sigmoid(z)
    if last == "relu":
        return np.maximum(z, 0.0)
    return z


def log_probs(net: DenseNet, params: Params, inputs) -> np.ndarray:
    x = _check_input(net, inputs)
    _, z = _hidden_pass(net, params, x)
    return _log_softmax(z)


def cross_entropy(probs, labels) -> float:
    """Summed negative log-likelihood of ``labels`` under row-normalised ``probs``."""
    p = np.asarray(probs, dtype=float)
    lab = np.asarray(labels, dtype=np.int64)
    picked = p[np.arange(len(lab)), lab]
    return float(-np.sum(np.log(np.maximum(picked, LOG_FLOOR))))


def loss_and_grad(net: DenseNet, params: Params, inputs, labels) -> Tuple[float, Params]:
    """Summed cross-entropy of a softmax net and its gradient."""
    if net.activations[-1] != "softmax":
        raise ValueError("cross-entropy training needs a softmax output layer")
    x = _check_input(net, inputs)
    lab = np.asarray(labels, dtype=np.int64)
    acts, z = _hidden_pass(net, params, x)
    logp = _log_softmax(z)
    rows = np.arange(len(lab))
    loss = float(-logp[rows, lab].sum())
    delta = np.exp(logp)
    delta[rows, lab] -= 1.0
    grads: Params = [None] * net.num_layers  # type: ignore[list-item]
    for i in range(net.num_layers - 1, -1, -1):
        w, _ = params[i]
        h_in = acts[i]
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        if i == 0:
            break
        delta = delta @ w.T
        a = net.activations[i - 1]
        if a == "sigmoid":
            delta = delta * h_in * (1.0 - h_in)
        elif a == "relu":
            delta = delta * (h_in > 0.0)
    return loss, grads


def backward(net: DenseNet, params: Params, inputs, labels) -> Params:
    return loss_and_grad(net, params, inputs, labels)[1]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Optional[Params] = None
    v: Optional[Params] = None

    def reset(self) -> None:
        self.t = 0
        self.m = self.v = None


def adam_step(params: Params, grads: Params, state: AdamState) -> Params:
    if state.m is None:
        state.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        state.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    new = []
    for i, ((w, b), (gw, gb)) in enumerate(zip(params, grads)):
        layer = []
        for j, (p, g) in enumerate(((w, gw), (b, gb))):
            m = state.m[i][j]
            v = state.v[i][j]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            layer.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new.append(tuple(layer))
    return new


@dataclass
class TrainResult:
    params: Params
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))


def train(
    net: DenseNet,
    params: Params,
    inputs,
    labels,
    iterations: int,
    batch_size: int,
    rng: np.random.Generator,
    state: Optional[AdamState] = None,
    lr: float = 1e-3,
) -> TrainResult:
    """``iterations`` Adam steps on mini-batches drawn with replacement."""
    x = _check_input(net, inputs)
    lab = np.asarray(labels, dtype=np.int64)
    if len(lab) == 0:
        raise ValueError("cannot train on an empty data set")
    state = AdamState(lr=lr) if state is None else state
    losses = np.empty(iterations)
    cur = copy_params(params)
    for it in range(iterations):
        idx = rng.integers(0, len(lab), batch_size)
        loss, grads = loss_and_grad(net, cur, x[idx], lab[idx])
        losses[it] = loss
        cur = adam_step(cur, grads, state)
    return TrainResult(cur, losses)


# ---------------------------------------------------------------------------
# Gradient checking


def numerical_grad(net: DenseNet, params: Params, inputs, labels, step: float = 1e-5,
                   chunk: int = 512) -> Params:
    """Central finite differences of the summed cross-entropy.

    The loss is evaluated in extended precision (``np.longdouble``), so the
    difference quotient is limited by its O(step**2) truncation error rather
    than by float64 cancellation.  Moving ``W_i[r, c]`` or ``b_i[c]`` only
    shifts column ``c`` of layer ``i``'s pre-activation, so perturbations
    are applied there and pushed through the remaining layers in stacks.
    """
    if net.activations[-1] != "softmax":
        raise ValueError("cross-entropy needs a softmax output layer")
    ld = np.longdouble
    lab = np.asarray(labels, dtype=np.int64)
    work = [(w.astype(ld), b.astype(ld)) for w, b in params]
    hs = [_check_input(net, inputs).astype(ld)]
    zs = []
    for (w, b), a in zip(work, net.activations):
        zs.append(hs[-1] @ w + b)
        hs.append(_activate(zs[-1], a))
    n = len(lab)

    def stacked_loss(i, z):
        # z: (P, n, width) pre-activations of layer i
        h = z
        for k in range(i, len(work)):
            if k > i:
                h = h @ work[k][0] + work[k][1]
            if net.activations[k] != "softmax":
                h = _activate(h, net.activations[k])
        h = h - h.max(axis=2, keepdims=True)
        logp = h - np.log(np.exp(h).sum(axis=2, keepdims=True))
        return -logp[:, np.arange(n), lab].sum(axis=1)

    out = []
    for i, (w, b) in enumerate(work):
        fan_in, width = w.shape
        # perturbation p < fan_in*width moves W[p // width, p % width]; the rest move b
        total = fan_in * width + width
        grad = np.empty(total)
        for lo in range(0, total, chunk):
            idx = np.arange(lo, min(lo + chunk, total))
            cols = idx % width
            shift = np.where(idx[:, None] < fan_in * width,
                             hs[i][:, np.minimum(idx // width, fan_in - 1)].T, ld(1.0)) * ld(step)
            z = np.broadcast_to(zs[i], (len(idx), n, width)).copy()
            z[np.arange(len(idx))[:, None], np.arange(n)[None, :], cols[:, None]] += shift
            up = stacked_loss(i, z)
            z[np.arange(len(idx))[:, None], np.arange(n)[None, :], cols[:, None]] -= 2 * shift
            down = stacked_loss(i, z)
            grad[idx] = ((up - down) / ld(2 * step)).astype(float)
        out.append((grad[: fan_in * width].reshape(fan_in, width), grad[fan_in * width :]))
    return out


def _activate(z, kind: str):
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def cross_entropy_logits(net: DenseNet, params: Params, inputs, labels) -> float:
    lab = np.asarray(labels, dtype=np.int64)
    return float(-log_probs(net, params, inputs)[np.arange(len(lab)), lab].sum())


def relative_errors(analytic: Params, numeric: Params, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)`` over all parameters.

    The floor keeps coordinates whose true gradient is numerically zero from
    dividing finite-difference rounding noise by nothing.
    """
    errs = []
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            errs.append((np.abs(a - n) / den).ravel())
    return np.concatenate(errs)


def gradient_check(net: DenseNet, params: Params, inputs, labels, step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences."""
    analytic = backward(net, params, inputs, labels)
    numeric = numerical_grad(net, params, inputs, labels, step)
    return float(relative_errors(analytic, numeric).max())


# ---------------------------------------------------------------------------
# Checkpoints
#
# Text layout, one record per line:
#   net dims=<d0,...,dm> acts=<a1,...,am>
#   W<i> <rows> <cols> <row-major comma-separated values>
#   b<i> <len> <comma-separated values>
# Layers appear in order; floats are written with repr() for exact round trip.


def dump_params(net: DenseNet, params: Params) -> List[str]:
    lines = [f"net {net.describe()}"]
    for i, (w, b) in enumerate(params):
        lines.append(f"W{i} {w.shape[0]} {w.shape[1]} " + ",".join(repr(float(v)) for v in w.ravel()))
        lines.append(f"b{i} {b.shape[0]} " + ",".join(repr(float(v)) for v in b))
    return lines


def parse_params(lines: Sequence[str]) -> Tuple[DenseNet, Params]:
    it = iter(lines)
    head = next(it).split()
    if head[0] != "net":
        raise ValueError("checkpoint must start with a 'net' line")
    fields = dict(tok.split("=", 1) for tok in head[1:])
    net = DenseNet(tuple(int(v) for v in fields["dims"].split(",")), tuple(fields["acts"].split(",")))
    params = []
    for i in range(net.num_layers):
        wl = next(it).split()
        rows, cols = int(wl[1]), int(wl[2])
        w = np.array([float(v) for v in wl[3].split(",")]).reshape(rows, cols)
        bl = next(it).split()
        b = np.array([float(v) for v in bl[2].split(",")])
        if wl[0] != f"W{i}" or bl[0] != f"b{i}":
            raise ValueError(f"layer {i} records out of order")
        params.append((w, b))
    return net, params


def save_params(path, net: DenseNet, params: Params) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(dump_params(net, params)) + "\n")


def load_params(path) -> Tuple[DenseNet, Params]:
    with open(path) as fh:
        return parse_params([ln.rstrip("\n") for ln in fh if ln.strip()])
