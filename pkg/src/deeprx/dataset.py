"""Pilot/info framing and labeled pilot sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import MimoChannelSpec, SisoChannelSpec, mimo_transmit, siso_transmit
from .constellation import Constellation, digits_to_label, num_classes


@dataclass(frozen=True)
class BlockLayout:
    pilot: int
    info: int

    def __post_init__(self):
        if self.pilot < 0 or self.info < 0:
            raise ValueError("segment lengths must be non-negative")

    @property
    def total(self) -> int:
        return self.pilot + self.info


@dataclass
class LabeledSet:
    """Channel outputs paired with class labels.

    ``outputs`` has shape ``(n, d)``; complex dtype for MIMO outputs, float
    otherwise.
    """

    outputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    block: int = 0

    def __post_init__(self):
        self.outputs = np.asarray(self.outputs)
        if self.outputs.ndim == 1:
            self.outputs = self.outputs[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.outputs) != len(self.labels):
            raise ValueError("outputs and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.outputs.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.outputs)

    def features(self) -> np.ndarray:
        return real_features(self.outputs)


def real_features(outputs: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts (``[re..., im...]``) for complex outputs."""
    out = np.asarray(outputs)
    if np.iscomplexobj(out):
        return np.concatenate([out.real, out.imag], axis=-1)
    return out.astype(float, copy=False)


def index_set(q: LabeledSet, s: int) -> np.ndarray:
    return np.flatnonzero(q.labels == s)


# ---------------------------------------------------------------------------
# Pilot construction


def de_bruijn(order: int, n: int) -> list[int]:
    """Cyclic de Bruijn sequence B(order, n) (Fredricksen-Maiorana)."""
    a = [0] * (order * n)
    seq: list[int] = []

    def db(t: int, p: int) -> None:
        if t > n:
            if n % p == 0:
                seq.extend(a[1 : p + 1])
        else:
            a[t] = a[t - p]
            db(t + 1, p)
            for v in range(a[t - p] + 1, order):
                a[t] = v
                db(t + 1, t)

    db(1, 1)
    return seq


def min_covering_pilots(order: int, arity: int, memory_states: bool) -> int:
    """Shortest pilot run that can show every class at least once."""
    return order**arity + (arity - 1 if memory_states else 0)


def make_pilot_digits(
    n_pilot: int,
    c: Constellation,
    arity: int,
    rng: np.random.Generator,
    *,
    memory_states: bool,
    coverage: bool = True,
) -> np.ndarray:
    """Symbol digits for a pilot run.

    With ``memory_states`` (SISO) the classes are sliding ``arity``-windows
    of one symbol stream and coverage comes from a randomly rotated and
    relabelled de Bruijn run; otherwise (MIMO) each pilot is an
    ``arity``-vector and coverage comes from shuffled full passes over all
    classes.  The remainder is uniform i.i.d.
    """
    m = c.order
    if coverage:
        need = min_covering_pilots(m, arity, memory_states)
        if n_pilot < need:
            raise ValueError(
                f"{n_pilot} pilots cannot cover all {m**arity} classes (need >= {need})"
            )
    if memory_states:
        out = rng.integers(0, m, n_pilot)
        if coverage:
            cyc = np.array(de_bruijn(m, arity), dtype=np.int64)
            cyc = np.roll(cyc, -int(rng.integers(len(cyc))))
            cyc = (cyc + int(rng.integers(m))) % m
            run = np.concatenate([cyc, cyc[: arity - 1]])
            out[: len(run)] = run
        return out
    n_cls = m**arity
    labels = rng.integers(0, n_cls, n_pilot)
    if coverage:
        passes = n_pilot // n_cls
        for p in range(passes):
            labels[p * n_cls : (p + 1) * n_cls] = rng.permutation(n_cls)
    return (labels[:, None] // (m ** np.arange(arity))) % m


def make_pilot_sequence(layout: BlockLayout, c: Constellation, arity: int, rng, *, memory_states, coverage=True):
    """Pilot symbols (values, not digits)."""
    digits = make_pilot_digits(layout.pilot, c, arity, rng, memory_states=memory_states, coverage=coverage)
    return c.point_array[digits]


def siso_state_labels(digits: np.ndarray, memory: int, order: int) -> np.ndarray:
    """Label of the state ``(s_i, ..., s_{i-L+1})`` for every ``i >= L-1``."""
    d = np.asarray(digits, dtype=np.int64)
    n = len(d) - memory + 1
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    win = np.stack([d[memory - 1 - l : memory - 1 - l + n] for l in range(memory)], axis=1)
    return digits_to_label(win, order)


def sliding_windows(y: np.ndarray, width: int) -> np.ndarray:
    """Rows ``(y_{i-W+1}, ..., y_i)`` for every ``i``, zero before the start."""
    y = np.asarray(y, dtype=float).ravel()
    pad = np.concatenate([np.zeros(width - 1), y])
    return np.lib.stride_tricks.sliding_window_view(pad, width).copy()


# ---------------------------------------------------------------------------
# Blocks


@dataclass(frozen=True)
class ReceivedBlock:
    """What the receiver may see: pilots with their labels, info outputs only."""

    block: int
    pilot_outputs: np.ndarray
    pilot_digits: np.ndarray
    pilot_labels: np.ndarray
    info_outputs: np.ndarray
    num_classes: int
    memory: Optional[int]

    def pilot_set(self, window: int = 1) -> LabeledSet:
        """The labeled set ``Q``.  SISO pilots whose state reaches into the
        zero guard carry no valid class and are left out."""
        if self.memory is None:
            return LabeledSet(self.pilot_outputs, self.pilot_labels, self.num_classes, self.block)
        start = self.memory - 1
        y = self.pilot_outputs
        out = sliding_windows(y, window)[start:] if window > 1 else y[start:]
        return LabeledSet(out, self.pilot_labels, self.num_classes, self.block)


@dataclass(frozen=True)
class TransmissionBlock:
    layout: BlockLayout
    received: ReceivedBlock
    info_digits: np.ndarray
    info_symbols: np.ndarray
    pilot_symbols: np.ndarray


def generate_block(
    spec, layout: BlockLayout, j: int, rng: np.random.Generator, *, coverage: bool = True
) -> TransmissionBlock:
    c = spec.constellation
    if isinstance(spec, SisoChannelSpec):
        L = spec.memory
        p_dig = make_pilot_digits(layout.pilot, c, L, rng, memory_states=True, coverage=coverage)
        i_dig = rng.integers(0, c.order, layout.info)
        digits = np.concatenate([p_dig, i_dig]).astype(np.int64)
        symbols = c.point_array[digits].real
        y = siso_transmit(symbols, spec, rng, j)
        labels = siso_state_labels(p_dig, L, c.order)
        rx = ReceivedBlock(j, y[: layout.pilot], p_dig, labels, y[layout.pilot :],
                           num_classes(c, L), L)
        return TransmissionBlock(layout, rx, i_dig, symbols[layout.pilot :], symbols[: layout.pilot])
    if isinstance(spec, MimoChannelSpec):
        K = spec.users
        p_dig = make_pilot_digits(layout.pilot, c, K, rng, memory_states=False, coverage=coverage)
        i_dig = rng.integers(0, c.order, (layout.info, K))
        digits = np.concatenate([p_dig, i_dig]).astype(np.int64)
        symbols = np.asarray(c.points, dtype=complex)[digits]
        y = mimo_transmit(symbols.reshape(-1, K), spec, rng, j)
        labels = digits_to_label(p_dig, c.order)
        rx = ReceivedBlock(j, y[: layout.pilot], p_dig, labels, y[layout.pilot :],
                           num_classes(c, K), None)
        return TransmissionBlock(layout, rx, i_dig, symbols[layout.pilot :], symbols[: layout.pilot])
    raise TypeError(f"unsupported channel spec {type(spec).__name__}")
