"""``deeprx`` command-line front end.

Subcommands::

    deeprx run       --config c.ini --out DIR    # first SNR point only
    deeprx sweep     --config c.ini --out DIR    # whole SNR grid
    deeprx pilots    --config c.ini --out DIR    # BER vs pilot count, efficiency factor
    deeprx ablation  --config c.ini --out DIR    # each augmentation alone
    deeprx gradcheck                             # backprop vs finite differences
    deeprx oracle                                # detectors vs exhaustive search

Exit status is 0 on success, 1 on a config or runtime error and 2 on a
usage error.  ``DEEPRX_SEED`` overrides the master seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import checks
from .charts import emit_chart
from .config import ConfigError, ResolvedConfig, apply_overrides, dump_config, load_config, parse_range, parse_seeds
from .harness import (
    GENIE,
    RunRecord,
    StreamError,
    TrainingMethod,
    ablation_methods,
    aggregate,
    pilot_sweep,
    sweep,
    write_results_csv,
    write_summary_csv,
)

GRADCHECK_TOL = 1e-5


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file (defaults apply when omitted)")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--snr", help='SNR grid in dB, "9:13:1" or "9,11,13"')
    p.add_argument("--seeds", help='seed count "5" or list "0,3,7"')
    p.add_argument("--blocks", type=int, help="blocks per stream")
    p.add_argument("--method", action="append",
                   help="training method; repeat or comma-separate (regular, combined, extended, ...)")
    p.add_argument("--beta", type=float, help="pilot multiplier for the extended method")
    p.add_argument("--receiver", action="append", help="receiver kind; repeat or comma-separate")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deeprx", description="Data-augmented deep receivers over block-fading channels.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, text in (("run", "run the experiment at the first SNR point"),
                       ("sweep", "run the experiment over the whole SNR grid"),
                       ("ablation", "compare each augmentation alone with regular and combined training")):
        _common(sub.add_parser(name, help=text))
    p = sub.add_parser("pilots", help="BER against pilot count and the pilot-efficiency factor")
    _common(p)
    p.add_argument("--grid", help='pilot counts, e.g. "100,200,300,400,500"')
    p.add_argument("--reference", type=int, help="pilot count of the augmented reference point")
    p = sub.add_parser("gradcheck", help="check backpropagation against central differences")
    p.add_argument("--seeds", type=int, default=5)
    p = sub.add_parser("oracle", help="check the detectors against exhaustive search")
    p.add_argument("--instances", type=int, default=200)
    return parser


def _split_multi(values: Optional[List[str]]) -> Optional[List[str]]:
    if not values:
        return None
    return [v.strip() for item in values for v in item.split(",") if v.strip()]


def _methods(names: Optional[List[str]], beta: Optional[float]):
    names = _split_multi(names)
    if names is None:
        return None
    out = []
    for n in names:
        if n == "extended" and beta is not None:
            out.append(TrainingMethod("extended", beta))
        else:
            out.append(TrainingMethod.parse(n))
    return tuple(out)


def resolve(args: argparse.Namespace) -> ResolvedConfig:
    """Config file (or defaults) with command-line and environment overrides applied."""
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ResolvedConfig()
    try:
        if args.beta is not None and not (args.method and "extended" in ",".join(args.method)):
            raise UsageError("--beta only applies together with --method extended")
        over = dict(
            snr_db=parse_range(args.snr) if args.snr else None,
            seeds=parse_seeds(args.seeds) if args.seeds else None,
            blocks=args.blocks,
            methods=_methods(args.method, args.beta),
            receivers=tuple(_split_multi(args.receiver)) if args.receiver else None,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    env = os.environ.get("DEEPRX_SEED")
    if env is not None:
        try:
            over["master_seed"] = int(env)
        except ValueError as exc:
            raise ConfigError(f"DEEPRX_SEED must be an integer, got {env!r}") from exc
    cfg = apply_overrides(cfg, **over)
    if getattr(args, "grid", None) or getattr(args, "reference", None):
        try:
            grid = tuple(int(v) for v in args.grid.split(",")) if args.grid else cfg.pilots.grid
        except ValueError as exc:
            raise UsageError(f"bad --grid: {exc}") from exc
        cfg = replace(cfg, pilots=replace(cfg.pilots, grid=grid,
                                          reference=args.reference or cfg.pilots.reference))
    return cfg


def _snr_chart(records: Sequence[RunRecord], path: Path, title: str) -> None:
    series: Dict[str, tuple] = {}
    for row in aggregate(records):
        name = GENIE if row.method == GENIE else f"{row.receiver} {row.method}"
        xs, ys = series.setdefault(name, ([], []))
        xs.append(row.snr_db)
        ys.append(row.mean_ber)
    emit_chart(series, path, "SNR [dB]", "BER", title)


def _write_run(records: Sequence[RunRecord], cfg: ResolvedConfig, out: Path, title: str) -> None:
    write_results_csv(records, out / "results.csv")
    write_summary_csv(aggregate(records), out / "summary.csv")
    _snr_chart(records, out / "ber_vs_snr.svg", title)


def _cmd_experiment(args, cfg: ResolvedConfig, out: Path) -> int:
    exp = cfg.experiment
    if args.command == "run":
        exp = replace(exp, snr_db=exp.snr_db[:1])
    elif args.command == "ablation":
        exp = replace(exp, methods=ablation_methods())
    cfg = replace(cfg, experiment=exp)
    (out / "config_resolved.ini").write_text(dump_config(cfg))
    records = sweep(exp, args.jobs)
    _write_run(records, cfg, out, f"{exp.channel.label}, {exp.pilots} pilots")
    _print_summary(aggregate(records))
    return 0


def _cmd_pilots(args, cfg: ResolvedConfig, out: Path) -> int:
    exp = cfg.experiment
    aug = next((m.name for m in exp.methods if m.variant != "regular"), "combined")
    (out / "config_resolved.ini").write_text(dump_config(cfg))
    records, effs = pilot_sweep(exp, cfg.pilots.grid, cfg.pilots.reference, aug, args.jobs)
    write_results_csv(records, out / "results.csv")
    # every grid point is its own configuration, so summarise per point
    by_fp: Dict[str, List[RunRecord]] = {}
    for r in records:
        by_fp.setdefault(r.fingerprint, []).append(r)
    rows = []
    for pilots, recs in zip(cfg.pilots.grid, by_fp.values()):
        rows += [(pilots, row) for row in aggregate(recs)]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("pilots", "method", "receiver", "channel", "snr_db", "seeds", "mean_ber", "stderr"))
        for p, row in rows:
            w.writerow([p] + row.csv_row())
    with open(out / "efficiency.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("receiver", "reference_pilots", "augmented_ber", "matching_pilots", "factor", "note"))
        for e in effs:
            w.writerow([e.receiver, e.reference_pilots, repr(float(e.augmented_ber)),
                        "" if e.matching_pilots is None else repr(e.matching_pilots),
                        "" if e.factor is None else repr(e.factor), e.note])
    series: Dict[str, tuple] = {}
    for p, row in rows:
        xs, ys = series.setdefault(f"{row.receiver} {row.method}", ([], []))
        xs.append(p)
        ys.append(row.mean_ber)
    emit_chart(series, out / "ber_vs_pilots.svg", "pilots per block", "BER",
               f"{exp.channel.label}, {exp.snr_db[0]:g} dB")
    for e in effs:
        factor = f"{e.factor:.2f}x" if e.factor is not None else e.note
        print(f"{e.receiver}: {aug} at {e.reference_pilots} pilots matches regular at "
              f"{'-' if e.matching_pilots is None else f'{e.matching_pilots:.0f}'} pilots ({factor})")
    return 0


def _print_summary(rows) -> None:
    for r in rows:
        print(f"{r.snr_db:6g} dB  {r.receiver:14s} {r.method:16s} BER {r.mean_ber:.3e} +- {r.stderr:.1e} ({r.seeds} seeds)")


def _cmd_gradcheck(args) -> int:
    worst = 0.0
    for name, errs in checks.gradcheck_all(range(args.seeds)).items():
        m = max(errs)
        worst = max(worst, m)
        print(f"{name:14s} max relative error {m:.2e} over {len(errs)} seeds  "
              f"{'ok' if m < GRADCHECK_TOL else 'FAIL'}")
    return 0 if worst < GRADCHECK_TOL else 1


def _cmd_oracle(args) -> int:
    reports = [checks.viterbi_oracle(args.instances), checks.mimo_genie_oracle(max(1, args.instances // 2))]
    for r in reports:
        print(f"{r.name:26s} {r.agree}/{r.total} agree  {'ok' if r.ok else 'FAIL'}")
    return 0 if all(r.ok for r in reports) else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = resolve(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "pilots":
            return _cmd_pilots(args, cfg, out)
        return _cmd_experiment(args, cfg, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"deeprx: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, StreamError, ValueError, OSError) as exc:
        print(f"deeprx: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
