"""Block-stream experiments: augment, train, detect, score; sweeps and aggregation.

Every random draw comes from a generator keyed on
``(master_seed, snr_index, seed, block, stage)``, so results do not depend on
the order in which cells are executed.  Channel data for a block does not
depend on the training method, which makes per-seed BER differences between
methods paired comparisons.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import channel as ch
from .augment import AugmentConfig, AugmentState, augment_dynamic, augment_static
from .constellation import BPSK, QPSK, digits_to_bits
from .dataset import BlockLayout, generate_block
from .receivers import (
    BlackBoxMimoReceiver,
    BlackBoxSisoReceiver,
    DeepSicReceiver,
    TrainingConfig,
    ViterbiNetReceiver,
    genie_map_mimo,
    genie_viterbi,
)

VARIANTS = ("regular", "combined", "extended", "geometric", "projection", "translation")
SISO_RECEIVERS = ("viterbinet", "blackbox_siso")
MIMO_RECEIVERS = ("deepsic", "blackbox_mimo")
GENIE = "genie"
RESULT_FIELDS = ("method", "receiver", "channel", "snr_db", "seed", "block", "ber", "qstar_size", "wall_ms")
SUMMARY_FIELDS = ("method", "receiver", "channel", "snr_db", "seeds", "mean_ber", "stderr")

_STAGES = {"data": 1, "init": 2, "augment": 3, "train": 4}


@dataclass(frozen=True)
class TrainingMethod:
    variant: str
    beta: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown training method {self.variant!r}")
        if self.variant == "extended" and not self.beta > 1.0:
            raise ValueError("extended pilot training needs beta > 1")

    @property
    def name(self) -> str:
        return f"extended({self.beta:g})" if self.variant == "extended" else self.variant

    @classmethod
    def parse(cls, text: str) -> "TrainingMethod":
        text = text.strip()
        if text.startswith("extended"):
            arg = text[len("extended"):].strip("() ")
            return cls("extended", float(arg) if arg else 2.5)
        return cls(text)

    def pilots(self, base: int) -> int:
        return int(round(self.beta * base)) if self.variant == "extended" else base


@dataclass(frozen=True)
class ChannelConfig:
    family: str = "siso"
    profile: str = "synthetic"
    nonlinear: bool = False
    tanh_gain: float = 1.0
    memory: int = 4
    taps: Tuple[float, ...] = ch.DEFAULT_SISO_TAPS
    periods: Tuple[float, ...] = ch.DEFAULT_PERIODS
    trace: Optional[str] = None
    users: int = 4
    antennas: int = 4

    def __post_init__(self):
        if self.family not in ("siso", "mimo"):
            raise ValueError(f"channel family must be siso or mimo, got {self.family!r}")
        if self.profile not in ("static", "synthetic", "trace"):
            raise ValueError(f"unknown tap profile {self.profile!r}")
        if self.profile == "trace" and not self.trace:
            raise ValueError("trace profile needs a trace file")
        if self.family == "siso" and len(self.taps) != self.memory:
            raise ValueError("number of taps must equal the channel memory")

    @property
    def label(self) -> str:
        return f"{self.family}-{'tanh' if self.nonlinear else 'linear'}-{self.profile}"

    @property
    def constellation(self):
        return BPSK if self.family == "siso" else QPSK

    def profile_obj(self):
        if self.profile == "trace":
            return ch.load_trace(self.trace)
        if self.family == "siso":
            base = np.asarray(self.taps, dtype=float)
            if self.profile == "static":
                return ch.StaticProfile(base)
            return ch.synthetic_siso_profile(base, self.periods)
        base = ch.exponential_decay_matrix(self.antennas, self.users)
        if self.profile == "static":
            return ch.StaticProfile(base)
        return ch.synthetic_mimo_profile(base, self.periods)

    def spec(self, snr_db: float):
        sigma2 = ch.snr_to_noise_variance(snr_db)
        gain = self.tanh_gain if self.nonlinear else None
        if self.family == "siso":
            return ch.SisoChannelSpec(self.memory, self.profile_obj(), sigma2, gain)
        return ch.MimoChannelSpec(self.users, self.antennas, self.profile_obj(), sigma2, gain)


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    pilots: int = 200
    info: int = 2000
    snr_db: Tuple[float, ...] = (12.0,)
    blocks: int = 20
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    master_seed: int = 0
    methods: Tuple[TrainingMethod, ...] = (TrainingMethod("regular"), TrainingMethod("combined"))
    receivers: Tuple[str, ...] = ("viterbinet",)
    kappa: int = 3
    kappa_single: int = 9
    alpha1: float = 0.3
    alpha2: float = 0.3
    dynamic: Optional[bool] = None
    iterations: int = 500
    batch_size: Optional[int] = None
    lr: Optional[float] = None
    warm_start: Optional[bool] = None
    coverage: bool = True
    genie: bool = True
    timing: bool = False

    def __post_init__(self):
        if not self.snr_db:
            raise ValueError("SNR grid must not be empty")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.blocks < 1:
            raise ValueError("need at least one block")
        if self.info < 1 or self.pilots < 1:
            raise ValueError("pilot and information segments must be non-empty")
        if self.channel.family == "siso" and self.pilots < self.channel.memory:
            raise ValueError(f"need at least {self.channel.memory} pilots for memory {self.channel.memory}")
        if self.iterations < 0 or self.kappa < 0 or self.kappa_single < 0:
            raise ValueError("iterations and augmentation factors must be non-negative")
        allowed = SISO_RECEIVERS if self.channel.family == "siso" else MIMO_RECEIVERS
        for r in self.receivers:
            if r not in allowed:
                raise ValueError(f"receiver {r!r} does not apply to a {self.channel.family} channel")
        if self.channel.profile == "trace":
            import os

            if not os.path.exists(self.channel.trace):
                raise ValueError(f"trace file not found: {self.channel.trace}")

    @property
    def is_dynamic(self) -> bool:
        return self.channel.profile != "static" if self.dynamic is None else self.dynamic

    def fingerprint(self) -> str:
        blob = json.dumps(_jsonable(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def training_config(self, receiver: str) -> TrainingConfig:
        """Per-receiver defaults, overridden by any explicitly set field.

        Model-based receivers use lr 1e-3, black boxes 1e-2.  The SISO
        receivers retrain from scratch on every block; the MIMO receivers
        continue from the previous block's weights.
        """
        lr = 1e-3 if receiver in ("viterbinet", "deepsic") else 1e-2
        batch = 16 if receiver == "blackbox_siso" else 32
        warm = receiver in MIMO_RECEIVERS
        return TrainingConfig(
            iterations=self.iterations,
            batch_size=batch if self.batch_size is None else self.batch_size,
            lr=lr if self.lr is None else self.lr,
            warm_start=warm if self.warm_start is None else self.warm_start,
        )

    def augment_config(self, method: TrainingMethod) -> Optional[AugmentConfig]:
        a1, a2 = (self.alpha1, self.alpha2) if self.is_dynamic else (1.0, 1.0)
        if method.variant == "combined":
            return AugmentConfig(self.kappa, a1, a2)
        if method.variant in ("geometric", "projection", "translation"):
            return AugmentConfig(self.kappa_single, a1, a2, (method.variant,))
        return None


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def cell_rng(master: int, snr_index: int, seed: int, block: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, snr_index, seed, block, _STAGES[stage]]))


def evaluate_ber(estimates, truth, constellation=BPSK) -> float:
    """Fraction of bits that differ after mapping symbol digits back to bits."""
    est = np.asarray(estimates, dtype=np.int64).ravel()
    tru = np.asarray(truth, dtype=np.int64).ravel()
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.size} estimates vs {tru.size} symbols")
    if est.size == 0:
        return float("nan")
    return float(np.mean(digits_to_bits(est, constellation) != digits_to_bits(tru, constellation)))


def make_receiver(kind: str, config: ExperimentConfig, rng: np.random.Generator):
    cc = config.channel
    tc = config.training_config(kind)
    if kind == "viterbinet":
        return ViterbiNetReceiver(cc.memory, rng, tc)
    if kind == "blackbox_siso":
        return BlackBoxSisoReceiver(cc.memory, rng, tc)
    if kind == "deepsic":
        return DeepSicReceiver(cc.users, cc.antennas, rng, tc)
    if kind == "blackbox_mimo":
        return BlackBoxMimoReceiver(cc.users, cc.antennas, rng, tc)
    raise ValueError(f"unknown receiver {kind!r}")


@dataclass(frozen=True)
class RunRecord:
    method: str
    receiver: str
    channel: str
    snr_db: float
    seed: int
    block: int
    ber: float
    qstar_size: int
    wall_ms: Optional[float]
    final_loss: float
    fingerprint: str

    def csv_row(self) -> list:
        wall = "" if self.wall_ms is None else repr(float(self.wall_ms))
        return [self.method, self.receiver, self.channel, repr(float(self.snr_db)), self.seed,
                self.block, repr(float(self.ber)), self.qstar_size, wall]


class StreamError(RuntimeError):
    pass


def run_block_stream(
    config: ExperimentConfig, method: TrainingMethod, receiver: str, snr_index: int, seed: int
) -> List[RunRecord]:
    """One (method, receiver, SNR, seed) cell over all blocks, in order."""
    snr = config.snr_db[snr_index]
    spec = config.channel.spec(snr)
    c = config.channel.constellation
    layout = BlockLayout(method.pilots(config.pilots), config.info)
    aug = config.augment_config(method)
    rcv = make_receiver(receiver, config, cell_rng(config.master_seed, snr_index, seed, 0, "init"))
    state = AugmentState()
    fp = config.fingerprint()
    out = []
    for j in range(config.blocks):
        try:
            t0 = time.perf_counter()
            blk = generate_block(spec, layout, j, cell_rng(config.master_seed, snr_index, seed, j, "data"),
                                 coverage=config.coverage)
            q = rcv.pilot_set(blk.received)
            if aug is not None:
                arng = cell_rng(config.master_seed, snr_index, seed, j, "augment")
                if config.is_dynamic:
                    q, state = augment_dynamic(q, state, aug, arng, c, spec.arity)
                else:
                    q = augment_static(q, aug, arng, c, spec.arity)
            rcv.fit(q, cell_rng(config.master_seed, snr_index, seed, j, "train"))
            ber = evaluate_ber(rcv.detect(blk.received), blk.info_digits, c)
            wall = (time.perf_counter() - t0) * 1e3 if config.timing else None
        except Exception as exc:
            raise StreamError(f"block {j}, SNR {snr} dB, seed {seed}, {method.name}/{receiver}: {exc}") from exc
        loss = float(rcv.last_losses[-1]) if len(rcv.last_losses) else float("nan")
        out.append(RunRecord(method.name, receiver, config.channel.label, snr, seed, j, ber,
                             len(q), wall, loss, fp))
    return out


def run_genie_stream(config: ExperimentConfig, snr_index: int, seed: int) -> List[RunRecord]:
    """Exact-likelihood detector on the same blocks regular training sees."""
    snr = config.snr_db[snr_index]
    spec = config.channel.spec(snr)
    if not spec.linear:
        return []
    c = config.channel.constellation
    layout = BlockLayout(config.pilots, config.info)
    fp = config.fingerprint()
    out = []
    for j in range(config.blocks):
        t0 = time.perf_counter()
        blk = generate_block(spec, layout, j, cell_rng(config.master_seed, snr_index, seed, j, "data"),
                             coverage=config.coverage)
        rx = blk.received
        if config.channel.family == "siso":
            est = genie_viterbi(rx, spec.taps(j), spec.sigma2, c)
        else:
            est = genie_map_mimo(rx.info_outputs, spec.matrix(j), spec.sigma2, c)
        ber = evaluate_ber(est, blk.info_digits, c)
        wall = (time.perf_counter() - t0) * 1e3 if config.timing else None
        out.append(RunRecord(GENIE, GENIE, config.channel.label, snr, seed, j, ber, 0, wall, float("nan"), fp))
    return out


# ---------------------------------------------------------------------------
# Sweeps


def _run_cell(args):
    config, kind, method, receiver, snr_index, seed = args
    if kind == GENIE:
        return run_genie_stream(config, snr_index, seed)
    return run_block_stream(config, method, receiver, snr_index, seed)


def sweep_cells(config: ExperimentConfig) -> list:
    cells = []
    for si in range(len(config.snr_db)):
        for seed in config.seeds:
            for m in config.methods:
                for r in config.receivers:
                    cells.append((config, "rx", m, r, si, seed))
            if config.genie:
                cells.append((config, GENIE, None, None, si, seed))
    return cells


def sweep(config: ExperimentConfig, jobs: int = 1) -> List[RunRecord]:
    """All cells of the SNR x seed x method x receiver grid (plus the genie).

    Records come back in grid order whatever ``jobs`` is.
    """
    cells = sweep_cells(config)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_cell, cells))
    else:
        parts = [_run_cell(c) for c in cells]
    return [rec for part in parts for rec in part]


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class SummaryRow:
    method: str
    receiver: str
    channel: str
    snr_db: float
    seeds: int
    mean_ber: float
    stderr: float

    def csv_row(self) -> list:
        return [self.method, self.receiver, self.channel, repr(float(self.snr_db)), self.seeds,
                repr(float(self.mean_ber)), repr(float(self.stderr))]


def per_seed_ber(records: Iterable[RunRecord]) -> Dict[tuple, Dict[int, float]]:
    """``{(method, receiver, snr): {seed: mean BER over blocks}}``.

    Blocks carry equal info lengths, so the block mean is the bit-weighted BER.
    """
    acc: Dict[tuple, Dict[int, List[float]]] = {}
    for r in records:
        acc.setdefault((r.method, r.receiver, r.snr_db), {}).setdefault(r.seed, []).append(r.ber)
    return {k: {s: float(np.mean(v)) for s, v in d.items()} for k, d in acc.items()}


def aggregate(records: Sequence[RunRecord]) -> List[SummaryRow]:
    fps = {r.fingerprint for r in records}
    if len(fps) > 1:
        raise ValueError(f"refusing to aggregate records from {len(fps)} different configurations")
    chan = {(r.method, r.receiver, r.snr_db): r.channel for r in records}
    rows = []
    for key, by_seed in per_seed_ber(records).items():
        vals = np.array([by_seed[s] for s in sorted(by_seed)])
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        rows.append(SummaryRow(key[0], key[1], chan[key], key[2], len(vals), float(vals.mean()), se))
    return rows


def sign_test(better: Sequence[float], worse: Sequence[float]) -> Tuple[float, int, int]:
    """One-sided paired sign test that ``better`` has lower values than ``worse``.

    Ties are dropped.  Returns ``(p, wins, n)`` with ``p = P(X >= wins)`` for
    ``X ~ Binomial(n, 1/2)``; ``p = 1`` when every pair ties.
    """
    d = np.asarray(worse, float) - np.asarray(better, float)
    wins = int(np.sum(d > 0))
    n = int(np.sum(d != 0))
    if n == 0:
        return 1.0, 0, 0
    p = sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0**n
    return float(p), wins, n


def paired_comparison(records, better: str, worse: str, receiver: str, snr_db: float):
    """Per-seed BERs of two methods on the same blocks, plus the sign test."""
    ps = per_seed_ber(records)
    a = ps[(better, receiver, snr_db)]
    b = ps[(worse, receiver, snr_db)]
    seeds = sorted(set(a) & set(b))
    av = np.array([a[s] for s in seeds])
    bv = np.array([b[s] for s in seeds])
    p, wins, n = sign_test(av, bv)
    return {"seeds": seeds, "better": av, "worse": bv, "gap": float(bv.mean() - av.mean()),
            "p": p, "wins": wins, "n": n}


# ---------------------------------------------------------------------------
# Pilot-efficiency and ablation studies


@dataclass(frozen=True)
class Efficiency:
    receiver: str
    reference_pilots: int
    augmented_ber: float
    matching_pilots: Optional[float]
    factor: Optional[float]
    note: str


def efficiency_factor(pilot_grid, regular_ber, augmented_ber: float, reference: int) -> Tuple[Optional[float], Optional[float], str]:
    """Pilot count at which the regular curve reaches ``augmented_ber``.

    Interpolates linearly in (pilots, log BER).  Refuses to extrapolate and
    refuses non-monotone regular curves.
    """
    x = np.asarray(pilot_grid, float)
    y = np.asarray(regular_ber, float)
    if len(x) < 2:
        return None, None, "undefined: need at least two pilot counts"
    order = np.argsort(x)
    x, y = x[order], y[order]
    if np.any(np.diff(y) > 0):
        return None, None, "undefined: regular curve is not monotone"
    if not augmented_ber > 0 or np.any(y <= 0):
        return None, None, "undefined: zero BER on the curve"
    if augmented_ber > y[0]:
        return None, None, "undefined: augmented BER above the whole regular curve"
    if augmented_ber < y[-1]:
        return None, None, f"undefined: beyond the grid (> {x[-1] / reference:g}x)"
    ly, lt = np.log(y), math.log(augmented_ber)
    for i in range(len(x) - 1):
        if ly[i] >= lt >= ly[i + 1]:
            frac = 0.0 if ly[i] == ly[i + 1] else (ly[i] - lt) / (ly[i] - ly[i + 1])
            match = float(x[i] + frac * (x[i + 1] - x[i]))
            return match, match / reference, "ok"
    return None, None, "undefined"  # pragma: no cover


def pilot_sweep(config: ExperimentConfig, pilot_grid: Sequence[int], reference: Optional[int] = None,
                augmented: str = "combined", jobs: int = 1):
    """BER against pilot count at the first SNR of ``config``.

    Returns ``(records, efficiencies)``; every grid point is a separate
    configuration, so records carry per-point fingerprints.
    """
    reference = config.pilots if reference is None else reference
    methods = (TrainingMethod("regular"), TrainingMethod.parse(augmented))
    records: List[RunRecord] = []
    curves: Dict[tuple, Dict[int, float]] = {}
    for p in pilot_grid:
        cfg = replace(config, pilots=int(p), snr_db=config.snr_db[:1], methods=methods, genie=False)
        recs = sweep(cfg, jobs)
        records += recs
        for row in aggregate(recs):
            curves.setdefault((row.method, row.receiver), {})[int(p)] = row.mean_ber
    effs = []
    for r in config.receivers:
        reg = curves.get(("regular", r), {})
        aug = curves.get((methods[1].name, r), {})
        grid = sorted(reg)
        if reference not in aug:
            effs.append(Efficiency(r, reference, float("nan"), None, None, "undefined: reference not in grid"))
            continue
        match, factor, note = efficiency_factor(grid, [reg[g] for g in grid], aug[reference], reference)
        effs.append(Efficiency(r, reference, aug[reference], match, factor, note))
    return records, effs


def ablation_methods() -> Tuple[TrainingMethod, ...]:
    return tuple(TrainingMethod(v) for v in ("regular", "geometric", "projection", "translation", "combined"))


def ablation(config: ExperimentConfig, jobs: int = 1) -> List[RunRecord]:
    """Each augmentation alone (``kappa_single`` passes) next to regular and combined."""
    return sweep(replace(config, methods=ablation_methods()), jobs)


# ---------------------------------------------------------------------------
# Persistence


def write_results_csv(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in records:
            w.writerow(r.csv_row())


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow(r.csv_row())


def read_results_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
