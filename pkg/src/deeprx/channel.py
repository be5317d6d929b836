"""Finite-memory SISO and flat MIMO channels with block-wise tap profiles.

Noise is additive Gaussian.  For complex outputs the real and imaginary parts
each carry variance ``sigma2 / 2``.  The optional nonlinearity is
``tanh(C * (signal + noise))`` applied per real coordinate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .constellation import BPSK, QPSK, Constellation, label_to_digits

#: Taps of the stationary finite-memory SISO channel.
DEFAULT_SISO_TAPS = (1.0, 0.606, 0.367, 0.223)
#: Per-tap oscillation periods (in blocks) of the synthetic fading profile.
DEFAULT_PERIODS = (10.0, 15.0, 20.0, 25.0)


def snr_to_noise_variance(snr_db: float) -> float:
    return float(10.0 ** (-snr_db / 10.0))


def noise_variance_to_snr(sigma2: float) -> float:
    return float(-10.0 * np.log10(sigma2))


def exponential_decay_matrix(n: int, k: int) -> np.ndarray:
    """``H[n, k] = exp(-|n - k|)``."""
    rows = np.arange(n)[:, None]
    cols = np.arange(k)[None, :]
    return np.exp(-np.abs(rows - cols)).astype(float)


# ---------------------------------------------------------------------------
# Tap profiles


@dataclass(frozen=True)
class StaticProfile:
    taps: np.ndarray

    def __call__(self, j: int) -> np.ndarray:
        _check_block(j)
        return np.array(self.taps, copy=True)

    @property
    def shape(self):
        return np.shape(self.taps)


@dataclass(frozen=True)
class SyntheticProfile:
    """Multi-frequency oscillation around a base tap set.

    ``h(j) = base * (floor + swing * cos(2*pi*j/period + phase))`` entrywise.
    """

    base: np.ndarray
    periods: np.ndarray
    phases: np.ndarray
    floor: float = 0.8
    swing: float = 0.2

    def __call__(self, j: int) -> np.ndarray:
        _check_block(j)
        osc = self.floor + self.swing * np.cos(2.0 * np.pi * j / self.periods + self.phases)
        return np.asarray(self.base) * osc

    @property
    def shape(self):
        return np.shape(self.base)


@dataclass(frozen=True)
class TraceProfile:
    """Per-block taps read from a trace; shape is ``(blocks, *tap_shape)``."""

    rows: np.ndarray

    def __call__(self, j: int) -> np.ndarray:
        _check_block(j)
        if j >= len(self.rows):
            raise IndexError(f"trace has {len(self.rows)} blocks; block {j} requested")
        return np.array(self.rows[j], copy=True)

    @property
    def shape(self):
        return np.shape(self.rows)[1:]


TapProfile = Union[StaticProfile, SyntheticProfile, TraceProfile]


def _check_block(j: int) -> None:
    if j < 0:
        raise IndexError(f"block index must be >= 0, got {j}")


def synthetic_siso_profile(
    base: Sequence[float] = DEFAULT_SISO_TAPS,
    periods: Sequence[float] = DEFAULT_PERIODS,
) -> SyntheticProfile:
    base = np.asarray(base, dtype=float)
    periods = np.resize(np.asarray(periods, dtype=float), base.shape)
    return SyntheticProfile(base, periods, np.zeros_like(base))


def synthetic_mimo_profile(
    base: np.ndarray, periods: Sequence[float] = DEFAULT_PERIODS
) -> SyntheticProfile:
    """Independent scalar oscillation per matrix entry.

    Entry ``(n, k)`` uses period ``periods[(n*K + k) % len(periods)]`` and a
    phase offset ``2*pi*(n*K + k)/(N*K)`` so no two entries move in lockstep.
    """
    base = np.asarray(base)
    flat = np.arange(base.size)
    per = np.asarray(periods, dtype=float)[flat % len(periods)].reshape(base.shape)
    phase = (2.0 * np.pi * flat / base.size).reshape(base.shape)
    return SyntheticProfile(base, per, phase)


def taps_at(profile: TapProfile, j: int) -> np.ndarray:
    return profile(j)


# ---------------------------------------------------------------------------
# Trace files


def write_trace(path, rows: np.ndarray) -> None:
    """Write per-block taps.  Real ``(B, L)`` rows give a SISO trace; complex
    ``(B, N, K)`` rows a MIMO trace with row-major ``re_n_k, im_n_k`` columns."""
    rows = np.asarray(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if rows.ndim == 2:
            w.writerow(["block"] + [f"tap_{l}" for l in range(rows.shape[1])])
            for j, r in enumerate(rows):
                w.writerow([j] + [repr(float(v)) for v in r])
        elif rows.ndim == 3:
            _, n, k = rows.shape
            header = ["block"]
            for a in range(n):
                for b in range(k):
                    header += [f"re_{a}_{b}", f"im_{a}_{b}"]
            w.writerow(header)
            for j, r in enumerate(rows):
                vals = []
                for v in np.asarray(r, dtype=complex).ravel():
                    vals += [repr(float(v.real)), repr(float(v.imag))]
                w.writerow([j] + vals)
        else:
            raise ValueError("trace rows must be (B, L) or (B, N, K)")


def load_trace(path) -> TraceProfile:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trace file") from None
        body = [row for row in reader if row]
    if not header or header[0] != "block":
        raise ValueError(f"{path}: first column must be 'block'")
    cols = header[1:]
    data = np.array([[float(v) for v in row[1:]] for row in body], dtype=float)
    if data.size == 0:
        raise ValueError(f"{path}: trace has no rows")
    if all(c.startswith("tap_") for c in cols):
        return TraceProfile(data)
    if cols and all(c.startswith(("re_", "im_")) for c in cols):
        last = cols[-1].split("_")
        n, k = int(last[1]) + 1, int(last[2]) + 1
        cplx = data[:, 0::2] + 1j * data[:, 1::2]
        return TraceProfile(cplx.reshape(len(data), n, k))
    raise ValueError(f"{path}: unrecognised trace header")


# ---------------------------------------------------------------------------
# Channel specs


@dataclass(frozen=True)
class SisoChannelSpec:
    memory: int
    profile: TapProfile
    sigma2: float
    tanh_gain: Optional[float] = None
    constellation: Constellation = field(default=BPSK)

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not self.sigma2 > 0:
            raise ValueError("noise variance must be > 0")
        if tuple(self.profile.shape) != (self.memory,):
            raise ValueError(f"profile shape {self.profile.shape} != ({self.memory},)")

    @property
    def snr_db(self) -> float:
        return noise_variance_to_snr(self.sigma2)

    @property
    def arity(self) -> int:
        return self.memory

    @property
    def output_dim(self) -> int:
        return 1

    @property
    def linear(self) -> bool:
        return self.tanh_gain is None

    def taps(self, j: int) -> np.ndarray:
        h = np.asarray(taps_at(self.profile, j), dtype=float)
        if not np.all(np.isfinite(h)):
            raise ValueError(f"non-finite taps at block {j}")
        return h


@dataclass(frozen=True)
class MimoChannelSpec:
    users: int
    antennas: int
    profile: TapProfile
    sigma2: float
    tanh_gain: Optional[float] = None
    constellation: Constellation = field(default=QPSK)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("noise variance must be > 0")
        if tuple(self.profile.shape) != (self.antennas, self.users):
            raise ValueError(
                f"profile shape {self.profile.shape} != ({self.antennas}, {self.users})"
            )

    @property
    def snr_db(self) -> float:
        return noise_variance_to_snr(self.sigma2)

    @property
    def arity(self) -> int:
        return self.users

    @property
    def output_dim(self) -> int:
        return self.antennas

    @property
    def linear(self) -> bool:
        return self.tanh_gain is None

    def matrix(self, j: int) -> np.ndarray:
        h = np.asarray(taps_at(self.profile, j))
        if not np.all(np.isfinite(h)):
            raise ValueError(f"non-finite channel matrix at block {j}")
        return h


ChannelSpec = Union[SisoChannelSpec, MimoChannelSpec]


def siso_convolve(symbols: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Noiseless ``sum_l h_l s_{i-l}`` with zeros before the block."""
    s = np.asarray(symbols, dtype=float)
    return np.convolve(s, np.asarray(taps, dtype=float))[: len(s)]


def siso_transmit(
    symbols, spec: SisoChannelSpec, rng: np.random.Generator, j: int = 0, taps=None
) -> np.ndarray:
    h = spec.taps(j) if taps is None else np.asarray(taps, dtype=float)
    s = np.asarray(symbols, dtype=float)
    y = siso_convolve(s, h) + np.sqrt(spec.sigma2) * rng.standard_normal(len(s))
    if spec.tanh_gain is not None:
        y = np.tanh(spec.tanh_gain * y)
    return y


def mimo_transmit(
    symbols, spec: MimoChannelSpec, rng: np.random.Generator, j: int = 0, matrix=None
) -> np.ndarray:
    """``symbols`` is ``(B, K)``; returns ``(B, N)`` complex outputs."""
    H = spec.matrix(j) if matrix is None else np.asarray(matrix)
    s = np.asarray(symbols, dtype=complex)
    if s.ndim != 2 or s.shape[1] != H.shape[1]:
        raise ValueError(f"symbols shape {s.shape} incompatible with H {H.shape}")
    b, n = s.shape[0], H.shape[0]
    scale = np.sqrt(spec.sigma2 / 2.0)
    noise = scale * (rng.standard_normal((b, n)) + 1j * rng.standard_normal((b, n)))
    y = s @ H.T + noise
    if spec.tanh_gain is not None:
        c = spec.tanh_gain
        y = np.tanh(c * y.real) + 1j * np.tanh(c * y.imag)
    return y


def siso_state_means(taps: np.ndarray, c: Constellation = BPSK) -> np.ndarray:
    """Noiseless output for every ``M**L`` state label."""
    taps = np.asarray(taps, dtype=float)
    labels = np.arange(c.order ** len(taps))
    digits = label_to_digits(labels, c.order, len(taps))
    return c.point_array[digits].real @ taps


def mimo_vector_means(H: np.ndarray, c: Constellation = QPSK) -> np.ndarray:
    """Noiseless ``H s`` for every ``M**K`` user-vector label, shape ``(M**K, N)``."""
    k = H.shape[1]
    labels = np.arange(c.order**k)
    s = np.asarray(c.points, dtype=complex)[label_to_digits(labels, c.order, k)]
    return s @ np.asarray(H).T


def exact_state_likelihood(y, label, spec: ChannelSpec, j: int = 0):
    """Gaussian density of ``y`` given the class ``label`` under a linear spec."""
    if not spec.linear:
        raise NotImplementedError("exact likelihoods are only available for linear channels")
    if isinstance(spec, SisoChannelSpec):
        m = siso_state_means(spec.taps(j), spec.constellation)[label]
        return np.exp(-((np.asarray(y) - m) ** 2) / (2 * spec.sigma2)) / np.sqrt(
            2 * np.pi * spec.sigma2
        )
    m = mimo_vector_means(spec.matrix(j), spec.constellation)[label]
    d2 = np.sum(np.abs(np.asarray(y) - m) ** 2, axis=-1)
    n = spec.antennas
    return np.exp(-d2 / spec.sigma2) / (np.pi * spec.sigma2) ** n
