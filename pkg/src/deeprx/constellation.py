"""Digital alphabets, Gray bit maps, mixed-radix class labels and rotation groups.

Class labels encode a tuple of constellation symbols as a mixed-radix integer,
least-significant digit first: the symbol at tuple position ``p`` contributes
``digit * M**p``.  For a SISO channel state the tuple is ordered
``(s_i, s_{i-1}, ..., s_{i-L+1})`` so that digit ``l`` pairs with tap ``h_l``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_SQRT_HALF = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class Constellation:
    """A unit-energy PSK alphabet.

    ``points[d]`` is the symbol whose Gray bit pattern reads as the integer
    ``d`` (most significant bit first).
    """

    name: str
    points: tuple[complex, ...]
    bits_per_symbol: int
    real: bool = field(default=False)

    @property
    def order(self) -> int:
        return len(self.points)

    @property
    def point_array(self) -> np.ndarray:
        arr = np.asarray(self.points, dtype=complex)
        return arr.real.copy() if self.real else arr

    @property
    def rotation_group(self) -> tuple[float, ...]:
        """Phases ``phi`` with ``exp(1j*phi) * S == S``."""
        return tuple(2.0 * np.pi * m / self.order for m in range(self.order))

    def digits(self, symbols) -> np.ndarray:
        """Map symbols to their alphabet indices; rejects off-alphabet values."""
        sym = np.asarray(symbols)
        pts = np.asarray(self.points, dtype=complex)
        dist = np.abs(sym.astype(complex)[..., None] - pts)
        idx = np.argmin(dist, axis=-1)
        if np.any(np.take_along_axis(dist, idx[..., None], -1)[..., 0] > 1e-9):
            raise ValueError(f"symbol not in {self.name} alphabet")
        return idx


BPSK = Constellation("BPSK", (1.0 + 0j, -1.0 + 0j), 1, real=True)
QPSK = Constellation(
    "QPSK",
    (
        complex(_SQRT_HALF, _SQRT_HALF),
        complex(_SQRT_HALF, -_SQRT_HALF),
        complex(-_SQRT_HALF, _SQRT_HALF),
        complex(-_SQRT_HALF, -_SQRT_HALF),
    ),
    2,
)

_BY_NAME = {"bpsk": BPSK, "qpsk": QPSK}


def get_constellation(name: str) -> Constellation:
    try:
        return _BY_NAME[name.lower()]
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}") from None


def modulate(bits, c: Constellation) -> np.ndarray:
    """Gray-map a bit sequence onto ``c``.

    For QPSK the first bit of each pair selects the sign of the in-phase part
    and the second the quadrature part, so neighbouring points differ in one bit.
    """
    b = np.asarray(bits, dtype=np.int64).ravel()
    k = c.bits_per_symbol
    if b.size % k:
        raise ValueError(f"bit count {b.size} not divisible by {k}")
    if np.any((b != 0) & (b != 1)):
        raise ValueError("bits must be 0 or 1")
    groups = b.reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    return c.point_array[groups @ weights]


def demodulate(symbols, c: Constellation) -> np.ndarray:
    """Hard nearest-point decision followed by the inverse Gray map."""
    sym = np.asarray(symbols).astype(complex).ravel()
    idx = np.argmin(np.abs(sym[:, None] - np.asarray(c.points)), axis=1)
    return digits_to_bits(idx, c)


def digits_to_bits(digits, c: Constellation) -> np.ndarray:
    d = np.asarray(digits, dtype=np.int64).ravel()
    k = c.bits_per_symbol
    shifts = np.arange(k - 1, -1, -1)
    return ((d[:, None] >> shifts) & 1).ravel()


def num_classes(c: Constellation, arity: int) -> int:
    return c.order**arity


def digits_to_label(digits, order: int) -> np.ndarray:
    """Mixed-radix encode along the last axis, least-significant digit first."""
    d = np.asarray(digits, dtype=np.int64)
    weights = order ** np.arange(d.shape[-1], dtype=np.int64)
    return d @ weights


def label_to_digits(labels, order: int, arity: int) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    weights = order ** np.arange(arity, dtype=np.int64)
    return (lab[..., None] // weights) % order


def class_index(symbols, c: Constellation):
    """Label of a symbol tuple (last axis is the tuple)."""
    digits = c.digits(symbols)
    out = digits_to_label(digits, c.order)
    return int(out) if np.ndim(out) == 0 else out


def class_symbols(label, c: Constellation, arity: int) -> np.ndarray:
    """Inverse of :func:`class_index`."""
    lab = np.asarray(label, dtype=np.int64)
    if np.any((lab < 0) | (lab >= c.order**arity)):
        raise ValueError("label out of range")
    return c.point_array[label_to_digits(lab, c.order, arity)]


def _phase_step(phi: float, c: Constellation) -> int:
    step = phi / (2.0 * np.pi / c.order)
    m = int(round(step))
    if abs(step - m) > 1e-9:
        raise ValueError(f"phase {phi} is not in the rotation group of {c.name}")
    return m % c.order


def rotate(symbols, phi: float, c: Constellation) -> np.ndarray:
    """Rotate every symbol by ``phi``; the result is snapped back onto ``c``."""
    m = _phase_step(phi, c)
    digits = c.digits(symbols)
    return c.point_array[_digit_rotation(c.name, m)[digits]]


@lru_cache(maxsize=None)
def _digit_rotation(name: str, m: int) -> np.ndarray:
    c = get_constellation(name)
    pts = np.asarray(c.points, dtype=complex)
    rotated = pts * np.exp(2j * np.pi * m / c.order)
    return np.argmin(np.abs(rotated[:, None] - pts[None, :]), axis=1)


@lru_cache(maxsize=None)
def _label_rotation_cached(name: str, m: int, arity: int) -> np.ndarray:
    c = get_constellation(name)
    labels = np.arange(c.order**arity)
    digits = label_to_digits(labels, c.order, arity)
    out = digits_to_label(_digit_rotation(name, m)[digits], c.order)
    out.setflags(write=False)
    return out


def label_rotation(c: Constellation, step: int, arity: int) -> np.ndarray:
    """Permutation of labels induced by rotating each symbol by ``step`` group steps."""
    return _label_rotation_cached(c.name.lower(), step % c.order, arity)
