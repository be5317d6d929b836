"""Experiment configuration files.

Plain ``key = value`` text grouped under section headers::

    [experiment]
    pilots = 200
    info = 2000
    snr_db = 12                      # or a list "9, 12" or a range "9:13:1"
    blocks = 20
    seeds = 0, 1, 2, 3, 4            # or a count "5" -> 0..4
    master_seed = 0
    methods = regular, combined, extended(2.5)
    receivers = viterbinet
    genie = true
    timing = false

    [channel]
    family = siso                    # siso | mimo
    profile = synthetic              # static | synthetic | trace
    trace = path/to/taps.csv         # profile = trace only
    nonlinear = false
    tanh_gain = 1.0
    memory = 4
    taps = 1.0, 0.606, 0.367, 0.223
    periods = 10, 15, 20, 25
    users = 4
    antennas = 4

    [augment]
    kappa = 3
    kappa_single = 9
    alpha1 = 0.3
    alpha2 = 0.3
    dynamic = auto                   # auto | true | false

    [training]
    iterations = 500
    batch_size = auto
    lr = auto
    warm_start = auto
    coverage = true

    [pilots]
    grid = 100, 200, 300, 400, 500
    reference = 200

Every key is optional; omitted keys take the defaults shown.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from .harness import ChannelConfig, ExperimentConfig, TrainingMethod


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PilotStudy:
    grid: Tuple[int, ...] = (100, 200, 300, 400, 500)
    reference: int = 200


@dataclass(frozen=True)
class ResolvedConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    pilots: PilotStudy = field(default_factory=PilotStudy)


KNOWN_KEYS = {
    "experiment": {"pilots", "info", "snr_db", "blocks", "seeds", "master_seed", "methods",
                   "receivers", "genie", "timing"},
    "channel": {"family", "profile", "trace", "nonlinear", "tanh_gain", "memory", "taps",
                "periods", "users", "antennas"},
    "augment": {"kappa", "kappa_single", "alpha1", "alpha2", "dynamic"},
    "training": {"iterations", "batch_size", "lr", "warm_start", "coverage"},
    "pilots": {"grid", "reference"},
}


def parse_range(text: str) -> Tuple[float, ...]:
    """``"9:13:1"`` -> (9, 10, 11, 12, 13); ``"9, 12"`` -> (9, 12)."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        start, stop, step = parts
        if step <= 0:
            raise ValueError("range step must be positive")
        n = int(round((stop - start) / step)) + 1
        if n < 1:
            raise ValueError("empty range")
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(v) for v in _split(text))


def parse_seeds(text: str) -> Tuple[int, ...]:
    vals = _split(text)
    if len(vals) == 1 and ":" not in text:
        n = int(vals[0])
        if n < 1:
            raise ValueError("seed count must be >= 1")
        return tuple(range(n))
    if ":" in text:
        return tuple(int(v) for v in parse_range(text))
    return tuple(int(v) for v in vals)


def _split(text: str):
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _auto(conv):
    def f(text):
        return None if text.strip().lower() in ("auto", "") else conv(text)

    return f


def _methods(text: str):
    # commas inside extended(...) never occur, so a plain split is safe
    return tuple(TrainingMethod.parse(v) for v in _split(text))


_CONVERTERS = {
    ("experiment", "pilots"): ("pilots", int),
    ("experiment", "info"): ("info", int),
    ("experiment", "snr_db"): ("snr_db", parse_range),
    ("experiment", "blocks"): ("blocks", int),
    ("experiment", "seeds"): ("seeds", parse_seeds),
    ("experiment", "master_seed"): ("master_seed", int),
    ("experiment", "methods"): ("methods", _methods),
    ("experiment", "receivers"): ("receivers", lambda t: tuple(_split(t))),
    ("experiment", "genie"): ("genie", _bool),
    ("experiment", "timing"): ("timing", _bool),
    ("augment", "kappa"): ("kappa", int),
    ("augment", "kappa_single"): ("kappa_single", int),
    ("augment", "alpha1"): ("alpha1", float),
    ("augment", "alpha2"): ("alpha2", float),
    ("augment", "dynamic"): ("dynamic", _auto(_bool)),
    ("training", "iterations"): ("iterations", int),
    ("training", "batch_size"): ("batch_size", _auto(int)),
    ("training", "lr"): ("lr", _auto(float)),
    ("training", "warm_start"): ("warm_start", _auto(_bool)),
    ("training", "coverage"): ("coverage", _bool),
}

_CHANNEL_CONVERTERS = {
    "family": str.strip,
    "profile": str.strip,
    "trace": _auto(str.strip),
    "nonlinear": _bool,
    "tanh_gain": float,
    "memory": int,
    "taps": lambda t: tuple(float(v) for v in _split(t)),
    "periods": lambda t: tuple(float(v) for v in _split(t)),
    "users": int,
    "antennas": int,
}


def _line_of(path: Path, section: str, key: str) -> Optional[int]:
    current = None
    for no, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and line.split("=", 1)[0].strip() == key:
            return no
    return None


def load_config(path) -> ResolvedConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def where(section, key):
        no = _line_of(path, section, key)
        return f"{path}:{no}" if no else str(path)

    for section in parser.sections():
        if section not in KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in KNOWN_KEYS[section]:
                raise ConfigError(f"{where(section, key)}: unknown key '{key}' in [{section}]")

    exp_kw, chan_kw, pil_kw = {}, {}, {}
    for section in parser.sections():
        for key, text in parser[section].items():
            try:
                if section == "channel":
                    chan_kw[key] = _CHANNEL_CONVERTERS[key](text)
                elif section == "pilots":
                    pil_kw[key] = tuple(int(v) for v in _split(text)) if key == "grid" else int(text)
                else:
                    name, conv = _CONVERTERS[(section, key)]
                    exp_kw[name] = conv(text)
            except ValueError as exc:
                raise ConfigError(f"{where(section, key)}: bad value for '{key}' in [{section}]: {exc}") from exc
    if chan_kw.get("trace"):
        trace = Path(chan_kw["trace"])
        if not trace.is_absolute():
            trace = path.parent / trace
        chan_kw["trace"] = str(trace)
    return build_config(exp_kw, chan_kw, pil_kw, source=str(path))


def build_config(exp_kw: dict, chan_kw: dict, pil_kw: dict | None = None, source: str = "config") -> ResolvedConfig:
    try:
        channel = ChannelConfig(**_channel_defaults(chan_kw))
        exp = ExperimentConfig(channel=channel, **_experiment_defaults(exp_kw, channel))
        pilots = PilotStudy(**(pil_kw or {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return ResolvedConfig(exp, pilots)


def _channel_defaults(kw: dict) -> dict:
    kw = dict(kw)
    if kw.get("family") == "mimo":
        kw.setdefault("taps", ())
        kw.setdefault("memory", 1)
    elif "memory" in kw and "taps" not in kw:
        # a non-default memory without taps gets an exponentially decaying tap set
        import math

        kw["taps"] = tuple(round(math.exp(-0.5 * l), 3) for l in range(kw["memory"]))
    return kw


def _experiment_defaults(kw: dict, channel: ChannelConfig) -> dict:
    kw = dict(kw)
    if channel.family == "mimo":
        kw.setdefault("receivers", ("deepsic",))
        kw.setdefault("kappa", 2)
        kw.setdefault("kappa_single", 6)
        kw.setdefault("pilots", 600)
    return kw


def apply_overrides(cfg: ResolvedConfig, **over) -> ResolvedConfig:
    """Replace experiment fields; ``None`` values are ignored."""
    kw = {k: v for k, v in over.items() if v is not None}
    if not kw:
        return cfg
    try:
        return replace(cfg, experiment=replace(cfg.experiment, **kw))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, TrainingMethod):
        return v.name
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ResolvedConfig) -> str:
    """Every setting with defaults materialised, in the same file format."""
    exp = cfg.experiment
    reverse = {name: (sec, key) for (sec, key), (name, _) in _CONVERTERS.items()}
    sections = {s: [] for s in ("experiment", "channel", "augment", "training", "pilots")}
    for f in fields(exp):
        if f.name == "channel":
            continue
        sec, key = reverse[f.name]
        val = getattr(exp, f.name)
        if f.name == "seeds" and len(val) == 1:
            # a lone number would read back as a seed count
            text = f"{val[0]}:{val[0]}"
        else:
            text = _fmt(val)
        sections[sec].append(f"{key} = {text}")
    for f in fields(exp.channel):
        val = getattr(exp.channel, f.name)
        sections["channel"].append(f"{f.name} = {'' if val is None and f.name == 'trace' else _fmt(val)}")
    sections["pilots"] = [f"grid = {_fmt(cfg.pilots.grid)}", f"reference = {cfg.pilots.reference}"]
    out = [f"# fingerprint {exp.fingerprint()}"]
    for sec, lines in sections.items():
        out.append(f"[{sec}]")
        out += lines
        out.append("")
    return "\n".join(out)
