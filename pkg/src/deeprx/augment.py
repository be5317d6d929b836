"""Channel-output augmentation for pilot-trained receivers.

Three label-aware transformations enrich a labeled pilot set ``Q``:

* geometric: draw from the per-class Gaussian fitted to ``Q``;
* projection: rotate an output and its label by a constellation-preserving phase;
* translation: move an observed residual ``y - mu(s)`` (phase-rotated) onto
  another class centre.

The static scheme fits the clusters on the current pilots alone.  The dynamic
scheme blends them with the clusters used on the previous block.

Cluster moments are kept over the real representation of the outputs
(``[re..., im...]`` for complex outputs), so covariances are real symmetric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constellation import Constellation, label_rotation
from .dataset import LabeledSet

AUGMENTATIONS = ("geometric", "projection", "translation")


@dataclass
class ClusterModel:
    means: np.ndarray  # (S, D)
    covs: np.ndarray  # (S, D, D)
    valid: np.ndarray  # (S,) bool; False marks classes with no data yet
    counts: np.ndarray  # (S,) samples behind the current-block estimate
    complex_out: bool = False

    @property
    def num_classes(self) -> int:
        return len(self.valid)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def complex_means(self) -> np.ndarray:
        return _from_real(self.means, self.complex_out)

    def copy(self) -> "ClusterModel":
        return ClusterModel(self.means.copy(), self.covs.copy(), self.valid.copy(),
                            self.counts.copy(), self.complex_out)


@dataclass(frozen=True)
class AugmentConfig:
    kappa: int = 3
    alpha1: float = 1.0
    alpha2: float = 1.0
    enabled: tuple = AUGMENTATIONS

    def __post_init__(self):
        if int(self.kappa) != self.kappa or self.kappa < 0:
            raise ValueError("kappa must be a non-negative integer")
        for a in (self.alpha1, self.alpha2):
            if not 0.0 <= a <= 1.0:
                raise ValueError("smoothing weights must lie in [0, 1]")
        unknown = set(self.enabled) - set(AUGMENTATIONS)
        if unknown:
            raise ValueError(f"unknown augmentations {sorted(unknown)}")
        # canonical order regardless of how the caller listed them
        object.__setattr__(self, "enabled", tuple(a for a in AUGMENTATIONS if a in self.enabled))


@dataclass
class AugmentState:
    """Clusters used on the previous block; ``None`` before the first block."""

    model: Optional[ClusterModel] = None


def _from_real(x: np.ndarray, complex_out: bool) -> np.ndarray:
    if not complex_out:
        return x
    d = x.shape[-1] // 2
    return x[..., :d] + 1j * x[..., d:]


# ---------------------------------------------------------------------------
# Cluster moments


def _class_sums(feats: np.ndarray, labels: np.ndarray, n_cls: int):
    counts = np.bincount(labels, minlength=n_cls)
    sums = np.zeros((n_cls, feats.shape[1]))
    np.add.at(sums, labels, feats)
    return counts, sums


def _scatter(feats, labels, centres, n_cls):
    """Per-class average of ``(y - c)(y - c)^T`` about the given centres."""
    counts = np.bincount(labels, minlength=n_cls)
    d = feats - centres[labels]
    outer = d[:, :, None] * d[:, None, :]
    acc = np.zeros((n_cls, feats.shape[1], feats.shape[1]))
    np.add.at(acc, labels, outer)
    nz = counts > 0
    acc[nz] /= counts[nz, None, None]
    return 0.5 * (acc + acc.transpose(0, 2, 1))


def estimate_means(q: LabeledSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-class mean of the real features and a mask of classes seen in ``q``."""
    feats = q.features()
    counts, sums = _class_sums(feats, q.labels, q.num_classes)
    means = np.zeros_like(sums)
    seen = counts > 0
    means[seen] = sums[seen] / counts[seen, None]
    return means, seen


def estimate_covariances(q: LabeledSet, means: np.ndarray) -> np.ndarray:
    """Biased per-class covariance about ``means``."""
    return _scatter(q.features(), q.labels, means, q.num_classes)


def estimate_clusters(q: LabeledSet) -> ClusterModel:
    means, seen = estimate_means(q)
    covs = estimate_covariances(q, means)
    counts = np.bincount(q.labels, minlength=q.num_classes)
    return ClusterModel(means, covs, seen, counts, q.is_complex)


def smooth_clusters(
    q: LabeledSet, prev: Optional[ClusterModel], alpha1: float, alpha2: float
) -> ClusterModel:
    """Exponentially smoothed cluster moments.

    A class seen in ``q`` but unset in ``prev`` takes its batch moments
    as-is; a class missing from ``q`` keeps its previous moments.
    """
    feats = q.features()
    n_cls = q.num_classes
    counts, sums = _class_sums(feats, q.labels, n_cls)
    seen = counts > 0
    batch = np.zeros_like(sums)
    batch[seen] = sums[seen] / counts[seen, None]
    if prev is None:
        prev = ClusterModel(np.zeros_like(batch), np.zeros((n_cls,) + (feats.shape[1],) * 2),
                            np.zeros(n_cls, bool), np.zeros(n_cls, np.int64), q.is_complex)
    if prev.means.shape != batch.shape:
        raise ValueError("previous cluster model does not match the current label space")
    a1 = np.where(prev.valid, alpha1, 1.0)[:, None]
    a2 = np.where(prev.valid, alpha2, 1.0)[:, None, None]
    means = np.where(seen[:, None], a1 * batch + (1.0 - a1) * prev.means, prev.means)
    scatter = _scatter(feats, q.labels, means, n_cls)
    covs = np.where(seen[:, None, None], a2 * scatter + (1.0 - a2) * prev.covs, prev.covs)
    return ClusterModel(means, covs, seen | prev.valid, counts, q.is_complex)


def regularize(cov: np.ndarray) -> np.ndarray:
    d = cov.shape[-1]
    eps = 1e-6 * np.trace(cov, axis1=-2, axis2=-1) / d + 1e-9
    return cov + eps[..., None, None] * np.eye(d)


def _cholesky_factors(model: ClusterModel) -> np.ndarray:
    reg = regularize(model.covs)
    out = np.zeros_like(reg)
    for s in np.flatnonzero(model.valid):
        try:
            out[s] = np.linalg.cholesky(reg[s])
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(reg[s])
            out[s] = v * np.sqrt(np.clip(w, 0.0, None))
    return out


# ---------------------------------------------------------------------------
# The three augmentations


def geometric_sample(model: ClusterModel, s, rng: np.random.Generator, factors=None) -> np.ndarray:
    """Draw outputs from ``N(mu(s), Sigma(s) + eps*I)``; ``s`` may be an array."""
    s = np.atleast_1d(np.asarray(s, dtype=np.int64))
    if not np.all(model.valid[s]):
        raise ValueError("cannot sample from an unset cluster")
    chol = _cholesky_factors(model) if factors is None else factors
    z = rng.standard_normal((len(s), model.dim))
    feats = model.means[s] + np.einsum("nij,nj->ni", chol[s], z)
    return _from_real(feats, model.complex_out)


def _phases(steps, c: Constellation) -> np.ndarray:
    return np.exp(2j * np.pi * np.asarray(steps) / c.order)


def _apply_phase(y: np.ndarray, steps, c: Constellation) -> np.ndarray:
    if np.iscomplexobj(y):
        return y * _phases(steps, c)[:, None]
    # real outputs: only the sign flips of the group act on them
    ph = _phases(steps, c).real
    if not np.allclose(np.abs(ph), 1.0):
        raise ValueError("real outputs only admit phases 0 and pi")
    return y * ph[:, None]


def conserving_projection(y, s, c: Constellation, arity: int, rng: np.random.Generator, steps=None):
    """Rotate outputs and labels by a random group phase.

    ``y`` is ``(n, d)``; ``s`` is ``(n,)`` labels.  ``steps`` overrides the
    random choice of ``phi = 2*pi*step/M``.
    """
    y = np.asarray(y)
    s = np.asarray(s, dtype=np.int64)
    if steps is None:
        steps = rng.integers(0, _group_order(y, c), len(s))
    steps = np.broadcast_to(np.asarray(steps, dtype=np.int64), s.shape)
    y2 = _apply_phase(y, steps, c)
    s2 = s.copy()
    for m in np.unique(steps):
        sel = steps == m
        s2[sel] = label_rotation(c, int(m), arity)[s[sel]]
    return y2, s2


def _group_order(y, c: Constellation) -> int:
    # a real output space only carries the {0, pi} subgroup
    return c.order if np.iscomplexobj(y) or c.real else 2


def translate(y, s, target, model: ClusterModel, c: Constellation, steps=0):
    """Move residuals ``y - mu(s)`` onto ``mu(target)`` after a phase rotation."""
    y = np.asarray(y)
    s = np.asarray(s, dtype=np.int64)
    target = np.broadcast_to(np.asarray(target, dtype=np.int64), s.shape)
    if not (np.all(model.valid[s]) and np.all(model.valid[target])):
        raise ValueError("translation needs both source and target clusters set")
    steps = np.broadcast_to(np.asarray(steps, dtype=np.int64), s.shape)
    mu = model.complex_means()
    delta = mu[target] - _apply_phase(mu[s], steps, c)
    return _apply_phase(y, steps, c) + delta, target.copy()


def _draw_targets(s: np.ndarray, valid_classes: np.ndarray, rng) -> np.ndarray:
    """Uniform target among set classes other than the source."""
    nv = len(valid_classes)
    if nv <= 1:
        rng.integers(0, 1, len(s))  # keep the stream aligned
        return s.copy()
    pos = np.searchsorted(valid_classes, s)
    r = rng.integers(0, nv - 1, len(s))
    r = r + (r >= pos)
    return valid_classes[r]


# ---------------------------------------------------------------------------
# Schemes


def _synthesize(q: LabeledSet, model: ClusterModel, config: AugmentConfig, rng, c, arity) -> LabeledSet:
    n = len(q)
    k = len(config.enabled)
    if config.kappa == 0 or k == 0 or n == 0:
        return LabeledSet(q.outputs.copy(), q.labels.copy(), q.num_classes, q.block)
    factors = _cholesky_factors(model) if "geometric" in config.enabled else None
    valid_classes = np.flatnonzero(model.valid)
    g_order = _group_order(q.outputs, c)
    outs = [q.outputs]
    labs = [q.labels]
    for _ in range(config.kappa):
        pass_y = np.empty((n, k, q.dim), dtype=q.outputs.dtype)
        pass_s = np.empty((n, k), dtype=np.int64)
        col = 0
        if "geometric" in config.enabled:
            pass_y[:, col] = geometric_sample(model, q.labels, rng, factors)
            pass_s[:, col] = q.labels
            col += 1
        if "projection" in config.enabled:
            y2, s2 = conserving_projection(q.outputs, q.labels, c, arity, rng)
            pass_y[:, col], pass_s[:, col] = y2, s2
            col += 1
        if "translation" in config.enabled:
            steps = rng.integers(0, g_order, n)
            targets = _draw_targets(q.labels, valid_classes, rng)
            y3, s3 = translate(q.outputs, q.labels, targets, model, c, steps)
            pass_y[:, col], pass_s[:, col] = y3, s3
        # per-sample interleaving: each source sample's synthetic outputs sit together
        outs.append(pass_y.reshape(n * k, q.dim))
        labs.append(pass_s.reshape(n * k))
    return LabeledSet(np.concatenate(outs), np.concatenate(labs), q.num_classes, q.block)


def augment_static(q: LabeledSet, config: AugmentConfig, rng, c: Constellation, arity: int) -> LabeledSet:
    """Clusters from ``q`` alone, then ``kappa`` synthesis passes over ``q``."""
    return _synthesize(q, estimate_clusters(q), config, rng, c, arity)


def augment_dynamic(
    q: LabeledSet, prev: AugmentState, config: AugmentConfig, rng, c: Constellation, arity: int
) -> tuple[LabeledSet, AugmentState]:
    model = smooth_clusters(q, prev.model, config.alpha1, config.alpha2)
    return _synthesize(q, model, config, rng, c, arity), AugmentState(model)


# ---------------------------------------------------------------------------
# Inspection


def write_cluster_csv(model: ClusterModel, path) -> None:
    d = model.dim
    header = ["class", "valid", "count"] + [f"mean_{i}" for i in range(d)]
    header += [f"cov_{a}_{b}" for a in range(d) for b in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in range(model.num_classes):
            row = [s, int(model.valid[s]), int(model.counts[s])]
            row += [repr(float(v)) for v in model.means[s]]
            row += [repr(float(v)) for v in model.covs[s].ravel()]
            w.writerow(row)


def read_cluster_csv(path, complex_out: bool = False) -> ClusterModel:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    d = sum(h.startswith("mean_") for h in header)
    arr = np.array([[float(v) for v in r] for r in rows])
    means = arr[:, 3 : 3 + d]
    covs = arr[:, 3 + d :].reshape(len(arr), d, d)
    return ClusterModel(means, covs, arr[:, 1].astype(bool), arr[:, 2].astype(np.int64), complex_out)
