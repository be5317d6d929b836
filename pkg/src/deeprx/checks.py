"""Self-checks runnable from the command line: gradient fidelity and detector oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .constellation import BPSK, QPSK
from .neural import DenseNet, gradient_check, init_params
from .receivers import (
    BlackBoxMimoReceiver,
    BlackBoxSisoReceiver,
    DeepSicReceiver,
    ViterbiNetReceiver,
    genie_map_mimo,
    genie_siso_metrics,
    viterbi_detect,
)


def receiver_architectures(memory: int = 4, users: int = 4, antennas: int = 4) -> Dict[str, DenseNet]:
    rng = np.random.default_rng(0)
    return {
        "viterbinet": ViterbiNetReceiver(memory, rng).net,
        "blackbox_siso": BlackBoxSisoReceiver(memory, rng).net,
        "deepsic": DeepSicReceiver(users, antennas, rng, iterations=1).net,
        "blackbox_mimo": BlackBoxMimoReceiver(users, antennas, rng).net,
    }


def gradcheck_all(seeds=range(5), batch: int = 4, step: float = 1e-5) -> Dict[str, List[float]]:
    """Max relative backprop-vs-central-difference error per architecture and seed."""
    out: Dict[str, List[float]] = {}
    for name, net in receiver_architectures().items():
        errs = []
        for seed in seeds:
            rng = np.random.default_rng(seed)
            params = init_params(net, rng)
            # non-zero biases so every code path (bias gradients, ReLU masks) is exercised
            params = [(w, rng.uniform(-0.5, 0.5, b.shape)) for w, b in params]
            x = rng.normal(size=(batch, net.dims[0]))
            y = rng.integers(0, net.dims[-1], batch)
            errs.append(gradient_check(net, params, x, y, step))
        out[name] = errs
    return out


def brute_force_mlsd(metrics: np.ndarray, order: int, memory: int, prefix=None) -> np.ndarray:
    """Exhaustive minimum-cost sequence, enumerating every ``order**B`` candidate.

    ``prefix`` holds the ``memory - 1`` known digits preceding the block
    (oldest first); without it the unknown prefix is enumerated too.
    Ties resolve to the first candidate in lexicographic order.
    """
    n = metrics.shape[0]
    pre_len = memory - 1
    best_cost, best = np.inf, None
    prefixes = [tuple(prefix)] if prefix is not None else itertools.product(range(order), repeat=pre_len)
    for pre in prefixes:
        for cand in itertools.product(range(order), repeat=n):
            seq = tuple(pre) + cand
            cost = 0.0
            for i in range(n):
                lab = 0
                for l in range(memory):
                    lab += seq[pre_len + i - l] * order**l
                cost += metrics[i, lab]
            if cost < best_cost:
                best_cost, best = cost, cand
    return np.array(best, dtype=np.int64)


@dataclass
class OracleReport:
    name: str
    agree: int
    total: int

    @property
    def ok(self) -> bool:
        return self.agree == self.total


def viterbi_oracle(instances: int = 200, length: int = 8, memories=(2, 3, 4), snr_db: float = 6.0,
                   seed: int = 0) -> OracleReport:
    """Exact-metric Viterbi against exhaustive sequence search on random BPSK blocks."""
    rng = np.random.default_rng(seed)
    sigma2 = 10 ** (-snr_db / 10)
    agree = 0
    for i in range(instances):
        L = memories[i % len(memories)]
        taps = rng.normal(size=L)
        digits = rng.integers(0, 2, length + L - 1)
        sym = BPSK.point_array[digits].real
        y = np.convolve(sym, taps)[L - 1 : L - 1 + length] + np.sqrt(sigma2) * rng.normal(size=length)
        met = genie_siso_metrics(y, taps, sigma2)
        prefix = digits[: L - 1]
        init = int(sum(int(d) * 2**l for l, d in enumerate(prefix[::-1])))
        fast = viterbi_detect(met, 2, L, init if L > 1 else None)
        slow = brute_force_mlsd(met, 2, L, prefix)
        agree += int(np.array_equal(fast, slow))
    return OracleReport("viterbi-vs-mlsd", agree, instances)


def mimo_genie_oracle(draws: int = 100, users: int = 4, antennas: int = 4, snr_db: float = 6.0,
                      seed: int = 0) -> OracleReport:
    """Vectorised MAP against a per-draw loop over every user vector."""
    rng = np.random.default_rng(seed)
    sigma2 = 10 ** (-snr_db / 10)
    H = rng.normal(size=(antennas, users)) + 1j * rng.normal(size=(antennas, users))
    pts = np.asarray(QPSK.points)
    agree = 0
    for _ in range(draws):
        s = pts[rng.integers(0, 4, users)]
        y = H @ s + np.sqrt(sigma2 / 2) * (rng.normal(size=antennas) + 1j * rng.normal(size=antennas))
        best, arg = np.inf, None
        for cand in itertools.product(range(4), repeat=users):
            d = y - H @ pts[list(cand)]
            v = float(np.vdot(d, d).real)
            if v < best:
                best, arg = v, cand
        fast = genie_map_mimo(y[None, :], H, sigma2)[0]
        agree += int(tuple(fast) == arg)
    return OracleReport("mimo-map-vs-enumeration", agree, draws)
