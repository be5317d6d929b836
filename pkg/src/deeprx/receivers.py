"""Pilot-trained detectors and exact-likelihood reference detectors.

Every trainable receiver exposes the same surface:

``pilot_set(rx)``
    labeled training set built from a received block;
``fit(q, rng)``
    train on a (possibly augmented) labeled set;
``detect(rx)``
    symbol digits for the info segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .channel import mimo_vector_means, siso_state_means
from .constellation import BPSK, QPSK, Constellation, digits_to_label, label_to_digits
from .dataset import LabeledSet, ReceivedBlock, real_features, sliding_windows
from .kernels import viterbi_path
from .neural import (
    AdamState,
    DenseNet,
    dump_params,
    forward,
    init_params,
    log_probs,
    parse_params,
    train,
)


@dataclass(frozen=True)
class TrainingConfig:
    iterations: int = 500
    batch_size: int = 32
    lr: float = 1e-3
    warm_start: bool = True


def initial_state_label(pilot_digits: np.ndarray, order: int, memory: int) -> int:
    """Trellis state formed by the last ``memory - 1`` pilot symbols."""
    tail = np.asarray(pilot_digits)[::-1][: memory - 1]
    return int(digits_to_label(tail, order)) if memory > 1 else 0


def viterbi_detect(metrics: np.ndarray, order: int, memory: int, init_state: Optional[int] = None):
    """Viterbi over branch costs ``metrics[i, label]``; returns symbol digits."""
    n_states = order ** (memory - 1)
    init = None
    if init_state is not None:
        init = np.full(n_states, np.inf)
        init[init_state] = 0.0
    return viterbi_path(metrics, order, memory, init)


def _fit_net(net, params, adam, feats, labels, cfg: TrainingConfig, rng):
    res = train(net, params, feats, labels, cfg.iterations, cfg.batch_size, rng, state=adam, lr=cfg.lr)
    return res.params, res.losses


class _SingleNetReceiver:
    """Shared plumbing for receivers made of one classifier."""

    kind = "single"

    def __init__(self, net: DenseNet, rng: np.random.Generator, cfg: TrainingConfig):
        self.net = net
        self.cfg = cfg
        self._init_rng = rng
        self.params = init_params(net, rng)
        self.last_losses = np.zeros(0)

    def fit(self, q: LabeledSet, rng: np.random.Generator) -> None:
        if not self.cfg.warm_start:
            self.params = init_params(self.net, self._init_rng)
        adam = AdamState(lr=self.cfg.lr)
        self.params, self.last_losses = _fit_net(
            self.net, self.params, adam, self.features(q), q.labels, self.cfg, rng
        )

    def features(self, q: LabeledSet) -> np.ndarray:
        return q.features()

    def nets(self):
        return [(self.net, self.params)]

    def descriptor(self) -> str:
        return f"receiver kind={self.kind}"

    def save_checkpoint(self, path) -> None:
        save_checkpoint(path, self)


class ViterbiNetReceiver(_SingleNetReceiver):
    """Viterbi equaliser whose branch metrics come from a learned state posterior."""

    kind = "viterbinet"

    def __init__(self, memory: int, rng, cfg: TrainingConfig = TrainingConfig(), c: Constellation = BPSK):
        self.memory = memory
        self.constellation = c
        net = DenseNet((1, 100, 50, c.order**memory), ("sigmoid", "relu", "softmax"))
        super().__init__(net, rng, cfg)

    def pilot_set(self, rx: ReceivedBlock) -> LabeledSet:
        return rx.pilot_set()

    def metrics(self, y) -> np.ndarray:
        # uniform state priors: -log p(state | y) differs from -log p(y | state)
        # by a term that is the same on every path
        return -log_probs(self.net, self.params, np.asarray(y, dtype=float).reshape(-1, 1))

    def detect(self, rx: ReceivedBlock) -> np.ndarray:
        init = initial_state_label(rx.pilot_digits, self.constellation.order, self.memory)
        return viterbi_detect(self.metrics(rx.info_outputs), self.constellation.order, self.memory, init)

    def descriptor(self) -> str:
        return f"receiver kind={self.kind} order={self.constellation.order} memory={self.memory}"


class BlackBoxSisoReceiver(_SingleNetReceiver):
    """Sliding-window classifier of the channel state; the newest digit is the decision."""

    kind = "blackbox_siso"

    def __init__(self, memory: int, rng, cfg: TrainingConfig = TrainingConfig(lr=1e-2, batch_size=16),
                 c: Constellation = BPSK, window: Optional[int] = None):
        self.memory = memory
        self.window = memory if window is None else window
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self.constellation = c
        net = DenseNet((self.window, 64, c.order**memory), ("relu", "softmax"))
        super().__init__(net, rng, cfg)

    def pilot_set(self, rx: ReceivedBlock) -> LabeledSet:
        return rx.pilot_set(window=self.window)

    def detect(self, rx: ReceivedBlock) -> np.ndarray:
        y = np.concatenate([np.ravel(rx.pilot_outputs), np.ravel(rx.info_outputs)])
        win = sliding_windows(y, self.window)[len(np.ravel(rx.pilot_outputs)):]
        labels = np.argmax(forward(self.net, self.params, win), axis=1)
        return labels % self.constellation.order

    def descriptor(self) -> str:
        return (f"receiver kind={self.kind} order={self.constellation.order} "
                f"memory={self.memory} window={self.window}")


class BlackBoxMimoReceiver(_SingleNetReceiver):
    """Joint classifier over all ``M**K`` user vectors."""

    kind = "blackbox_mimo"

    def __init__(self, users: int, antennas: int, rng,
                 cfg: TrainingConfig = TrainingConfig(lr=1e-2, batch_size=32), c: Constellation = QPSK):
        self.users, self.antennas, self.constellation = users, antennas, c
        net = DenseNet((2 * antennas, 60, 60, c.order**users), ("relu", "relu", "softmax"))
        super().__init__(net, rng, cfg)

    def pilot_set(self, rx: ReceivedBlock) -> LabeledSet:
        return rx.pilot_set()

    def detect(self, rx: ReceivedBlock) -> np.ndarray:
        probs = forward(self.net, self.params, real_features(rx.info_outputs))
        return label_to_digits(np.argmax(probs, axis=1), self.constellation.order, self.users)

    def descriptor(self) -> str:
        return (f"receiver kind={self.kind} order={self.constellation.order} "
                f"users={self.users} antennas={self.antennas}")


class DeepSicReceiver:
    """Iterative soft interference cancellation with one classifier per user and stage.

    Stage ``q`` classifier for user ``k`` sees the stacked real channel output
    and the stage ``q-1`` symbol PMFs of the other users; stage 0 PMFs are
    uniform.  Stages are trained in order, each on the soft outputs of the
    already trained previous stage.
    """

    kind = "deepsic"

    def __init__(self, users: int, antennas: int, rng, cfg: TrainingConfig = TrainingConfig(),
                 c: Constellation = QPSK, iterations: int = 5):
        self.users, self.antennas, self.constellation = users, antennas, c
        self.stages = iterations
        self.cfg = cfg
        self._init_rng = rng
        m = c.order
        self.net = DenseNet((2 * antennas + (users - 1) * m, 60, 30, m), ("sigmoid", "relu", "softmax"))
        self.params = [[init_params(self.net, rng) for _ in range(users)] for _ in range(iterations)]
        self.last_losses = np.zeros(0)

    def pilot_set(self, rx: ReceivedBlock) -> LabeledSet:
        return rx.pilot_set()

    def _stage_input(self, feats: np.ndarray, soft: np.ndarray, k: int) -> np.ndarray:
        others = np.delete(soft, k, axis=1).reshape(len(feats), -1)
        return np.concatenate([feats, others], axis=1)

    def _initial_soft(self, n: int) -> np.ndarray:
        m = self.constellation.order
        return np.full((n, self.users, m), 1.0 / m)

    def fit(self, q: LabeledSet, rng: np.random.Generator) -> None:
        if not self.cfg.warm_start:
            self.params = [[init_params(self.net, self._init_rng) for _ in range(self.users)]
                           for _ in range(self.stages)]
        feats = q.features()
        digits = label_to_digits(q.labels, self.constellation.order, self.users)
        soft = self._initial_soft(len(q))
        losses = []
        for st in range(self.stages):
            new = np.empty_like(soft)
            for k in range(self.users):
                x = self._stage_input(feats, soft, k)
                adam = AdamState(lr=self.cfg.lr)
                p, ls = _fit_net(self.net, self.params[st][k], adam, x, digits[:, k], self.cfg, rng)
                self.params[st][k] = p
                losses.append(ls)
                new[:, k] = forward(self.net, p, x)
            soft = new
        self.last_losses = np.concatenate(losses) if losses else np.zeros(0)

    def soft_estimates(self, y) -> List[np.ndarray]:
        """Per-stage user PMFs ``(n, K, M)``, starting with the uniform stage 0."""
        feats = real_features(np.asarray(y))
        soft = self._initial_soft(len(feats))
        history = [soft]
        for st in range(self.stages):
            new = np.empty_like(soft)
            for k in range(self.users):
                new[:, k] = forward(self.net, self.params[st][k], self._stage_input(feats, soft, k))
            soft = new
            history.append(soft)
        return history

    def detect(self, rx: ReceivedBlock) -> np.ndarray:
        return np.argmax(self.soft_estimates(rx.info_outputs)[-1], axis=2)

    def nets(self):
        return [(self.net, p) for stage in self.params for p in stage]

    def descriptor(self) -> str:
        return (f"receiver kind={self.kind} order={self.constellation.order} users={self.users} "
                f"antennas={self.antennas} stages={self.stages}")

    def save_checkpoint(self, path) -> None:
        save_checkpoint(path, self)


# ---------------------------------------------------------------------------
# Reference detectors with the true channel law


def genie_siso_metrics(y, taps, sigma2: float, c: Constellation = BPSK) -> np.ndarray:
    """Exact ``-log p(y | state)`` up to a constant shared by all states."""
    means = siso_state_means(taps, c)
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    return (y - means[None, :]) ** 2 / (2.0 * sigma2)


def genie_viterbi(rx: ReceivedBlock, taps, sigma2: float, c: Constellation = BPSK) -> np.ndarray:
    memory = len(taps)
    init = initial_state_label(rx.pilot_digits, c.order, memory)
    return viterbi_detect(genie_siso_metrics(rx.info_outputs, taps, sigma2, c), c.order, memory, init)


def genie_map_mimo(y, H, sigma2: float, c: Constellation = QPSK, chunk: int = 4096) -> np.ndarray:
    """Exhaustive MAP over all user vectors (uniform priors, Gaussian noise)."""
    del sigma2  # the arg-min of the Euclidean distance does not depend on it
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    means = mimo_vector_means(np.asarray(H), c)
    out = np.empty(len(y), dtype=np.int64)
    for a in range(0, len(y), chunk):
        d = y[a : a + chunk, None, :] - means[None, :, :]
        out[a : a + chunk] = np.argmin(np.sum(d.real**2 + d.imag**2, axis=2), axis=1)
    return label_to_digits(out, c.order, H.shape[1])


# ---------------------------------------------------------------------------
# Checkpoints: an architecture descriptor line, then each network's records.


def save_checkpoint(path, receiver) -> None:
    lines = [receiver.descriptor()]
    for net, params in receiver.nets():
        lines += dump_params(net, params)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path, rng: Optional[np.random.Generator] = None):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "receiver":
        raise ValueError("checkpoint must start with a 'receiver' descriptor")
    meta = dict(tok.split("=", 1) for tok in head[1:])
    rng = np.random.default_rng(0) if rng is None else rng
    kind = meta["kind"]
    c = BPSK if int(meta["order"]) == 2 else QPSK
    if kind == "viterbinet":
        rcv = ViterbiNetReceiver(int(meta["memory"]), rng, c=c)
    elif kind == "blackbox_siso":
        rcv = BlackBoxSisoReceiver(int(meta["memory"]), rng, c=c, window=int(meta["window"]))
    elif kind == "blackbox_mimo":
        rcv = BlackBoxMimoReceiver(int(meta["users"]), int(meta["antennas"]), rng, c=c)
    elif kind == "deepsic":
        rcv = DeepSicReceiver(int(meta["users"]), int(meta["antennas"]), rng, c=c,
                              iterations=int(meta["stages"]))
    else:
        raise ValueError(f"unknown receiver kind {kind!r}")
    body = lines[1:]
    per_net = 1 + 2 * rcv.net.num_layers
    loaded = [parse_params(body[i : i + per_net]) for i in range(0, len(body), per_net)]
    if isinstance(rcv, DeepSicReceiver):
        if len(loaded) != rcv.stages * rcv.users:
            raise ValueError("checkpoint network count does not match the descriptor")
        rcv.params = [[loaded[s * rcv.users + k][1] for k in range(rcv.users)] for s in range(rcv.stages)]
    else:
        if len(loaded) != 1 or loaded[0][0] != rcv.net:
            raise ValueError("checkpoint network does not match the descriptor")
        rcv.params = loaded[0][1]
    return rcv


RECEIVER_KINDS = ("viterbinet", "blackbox_siso", "deepsic", "blackbox_mimo")
