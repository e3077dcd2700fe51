"""Pipeline configuration: an INI file validated into frozen dataclasses.

Example::

    [meta]
    schema_version = 1

    [run]
    seed = 0
    jobs = 1

    [preprocess]
    target_fs = 128
    band_lo = 0.4
    band_hi = 45
    causal = true

    [windows]
    length_s = 5
    train_step_s = 0.125
    eval_step_s = 5
    selection_step_s = 0.125
    sweep_lengths = 2, 4, 5, 8, 10

    [channels]
    runtime = Fp1, F7, FC5, FC6, T7, T8, P7, O2
    standard = Fp1, Fp2, C3, C4, P7, P8, O1, O2
    n_select = 8

    [selection]
    band = gamma
    iterations = 10
    n_trees = 100

    [model]
    n_trees = 100
    top_n = 34
    sweep_min = 25
    sweep_max = 35
    run_sweep = true
    training = pooled

    [split]
    mode = block
    folds = 5

    [data]
    dir = data/synthetic
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .core import BAND_NAMES, OPENBCI_DEFAULT_CHANNELS, SELECTED_CHANNELS, KNOWN_CHANNELS

SCHEMA_VERSION = 1
SPLIT_MODES = ("block", "window-random")
TRAINING_MODES = ("pooled", "per-subject")


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    jobs: int = 1


@dataclass(frozen=True)
class PreprocessSection:
    target_fs: float = 128.0
    band_lo: float = 0.4
    band_hi: float = 45.0
    causal: bool = True


@dataclass(frozen=True)
class WindowsSection:
    length_s: float = 5.0
    train_step_s: float = 0.125
    eval_step_s: float = 5.0
    selection_step_s: float = 0.125
    sweep_lengths: tuple[float, ...] = (2.0, 4.0, 5.0, 8.0, 10.0)


@dataclass(frozen=True)
class ChannelsSection:
    runtime: tuple[str, ...] = SELECTED_CHANNELS
    standard: tuple[str, ...] = OPENBCI_DEFAULT_CHANNELS
    n_select: int = 8


@dataclass(frozen=True)
class SelectionSection:
    band: str = "gamma"
    iterations: int = 10
    n_trees: int = 100


@dataclass(frozen=True)
class ModelSection:
    n_trees: int = 100
    top_n: int = 34
    sweep_min: int = 25
    sweep_max: int = 35
    run_sweep: bool = True
    training: str = "pooled"


@dataclass(frozen=True)
class SplitSection:
    mode: str = "block"
    folds: int = 5


@dataclass(frozen=True)
class DataSection:
    dir: str = ""  # dataset directory; relative paths resolve against the config file


@dataclass(frozen=True)
class PipelineConfig:
    run: RunSection = field(default_factory=RunSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    windows: WindowsSection = field(default_factory=WindowsSection)
    channels: ChannelsSection = field(default_factory=ChannelsSection)
    selection: SelectionSection = field(default_factory=SelectionSection)
    model: ModelSection = field(default_factory=ModelSection)
    split: SplitSection = field(default_factory=SplitSection)
    data: DataSection = field(default_factory=DataSection)

    def validate(self) -> "PipelineConfig":
        _check(self)
        return self

    def as_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        d = self.as_dict()
        d["run"].pop("jobs")  # parallelism never changes results
        d.pop("data")  # where the data lives is not a setting of the experiment
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, run=replace(self.run, seed=seed))

    def to_ini(self) -> str:
        lines = ["[meta]", f"schema_version = {SCHEMA_VERSION}", ""]
        for f in fields(self):
            section = getattr(self, f.name)
            lines.append(f"[{f.name}]")
            for sf in fields(section):
                v = getattr(section, sf.name)
                if isinstance(v, tuple):
                    v = ", ".join(str(x) for x in v)
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                lines.append(f"{sf.name} = {v}")
            lines.append("")
        return "\n".join(lines)


def _check(cfg: PipelineConfig) -> None:
    def need(cond, path, msg):
        if not cond:
            raise ConfigError(path, msg)

    need(cfg.run.jobs >= 1, "run.jobs", "must be >= 1")
    p = cfg.preprocess
    need(p.target_fs > 0, "preprocess.target_fs", "must be positive")
    need(0 < p.band_lo < p.band_hi < p.target_fs / 2, "preprocess.band_hi", "need 0 < band_lo < band_hi < target_fs/2")
    w = cfg.windows
    need(w.length_s > 0, "windows.length_s", "must be positive")
    for name in ("train_step_s", "eval_step_s", "selection_step_s"):
        v = getattr(w, name)
        need(0 < v, f"windows.{name}", "must be positive")
    need(w.train_step_s <= w.length_s, "windows.train_step_s", "must not exceed length_s")
    need(w.eval_step_s <= w.length_s, "windows.eval_step_s", "must not exceed length_s")
    need(w.selection_step_s <= w.length_s, "windows.selection_step_s", "must not exceed length_s")
    need(len(w.sweep_lengths) >= 1 and all(x >= 1 for x in w.sweep_lengths), "windows.sweep_lengths", "need lengths >= 1 s")
    c = cfg.channels
    for name in ("runtime", "standard"):
        chans = getattr(c, name)
        need(len(chans) >= 2, f"channels.{name}", "need at least two channels")
        unknown = [ch for ch in chans if ch not in KNOWN_CHANNELS]
        need(not unknown, f"channels.{name}", f"unknown channels {unknown}")
        need(len(set(chans)) == len(chans), f"channels.{name}", "duplicate channel")
    need(1 <= c.n_select <= 32, "channels.n_select", "must be in 1..32")
    s = cfg.selection
    need(s.band in BAND_NAMES, "selection.band", f"must be one of {BAND_NAMES}")
    need(s.iterations >= 1, "selection.iterations", "must be >= 1")
    need(s.n_trees >= 1, "selection.n_trees", "must be >= 1")
    m = cfg.model
    need(m.n_trees >= 1, "model.n_trees", "must be >= 1")
    need(m.top_n >= 1, "model.top_n", "must be >= 1")
    need(1 <= m.sweep_min <= m.sweep_max, "model.sweep_max", "need 1 <= sweep_min <= sweep_max")
    need(m.training in TRAINING_MODES, "model.training", f"must be one of {TRAINING_MODES}")
    n_feat = 9 * len(c.runtime)
    need(m.top_n <= n_feat, "model.top_n", f"exceeds the {n_feat} available features")
    need(m.sweep_max <= n_feat, "model.sweep_max", f"exceeds the {n_feat} available features")
    sp = cfg.split
    need(sp.mode in SPLIT_MODES, "split.mode", f"must be one of {SPLIT_MODES}")
    need(sp.folds >= 2, "split.folds", "must be >= 2")


def _convert(path: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
        return raw.strip()
    except ValueError:
        raise ConfigError(path, f"cannot parse {raw!r} as {type(default).__name__}") from None


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    version = cp.get("meta", "schema_version", fallback=None)
    if version is None:
        raise ConfigError("meta.schema_version", "missing")
    if version.strip() != str(SCHEMA_VERSION):
        raise ConfigError("meta.schema_version", f"unsupported version {version.strip()}")
    base = PipelineConfig()
    sections = {f.name: f for f in fields(PipelineConfig)}
    for name in cp.sections():
        if name != "meta" and name not in sections:
            raise ConfigError(name, "unknown section")
    kwargs = {}
    for name in sections:
        default_section = getattr(base, name)
        known = {f.name: f for f in fields(default_section)}
        values = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in known:
                    raise ConfigError(f"{name}.{key}", "unknown key")
                values[key] = _convert(f"{name}.{key}", raw, getattr(default_section, key))
        kwargs[name] = replace(default_section, **values)
    return PipelineConfig(**kwargs).validate()


def load_config(path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError("<file>", f"{p} not found")
    cfg = parse_config(p.read_text(), str(p))
    if cfg.data.dir and not Path(cfg.data.dir).is_absolute():
        cfg = replace(cfg, data=DataSection(str((p.parent / cfg.data.dir).resolve())))
    return cfg


# -- synthetic dataset spec ---------------------------------------------------
#
#   [synthetic]
#   n_subjects = 2
#   n_trials = 27
#   trial_length_s = 30
#   fs = 128
#   noise_sigma = 1
#   label_noise = 0
#   channels = Fp1, AF3, ...        (default: all 32)
#
#   [signature.valence]             (any signature section replaces the defaults)
#   band = theta
#   channels = T7, T8
#   amplitude = 10

_SYNTH_KEYS = {
    "n_subjects": int,
    "n_trials": int,
    "trial_length_s": float,
    "fs": float,
    "noise_sigma": float,
    "label_noise": float,
}


def parse_synthetic_spec(text: str, source: str = "<spec>"):
    from .core import COMPONENTS, DomainError
    from .io import Signature, SyntheticSpec

    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    kwargs = {}
    sigs = {}
    for name in cp.sections():
        if name == "synthetic":
            for key, raw in cp.items(name):
                path = f"synthetic.{key}"
                if key == "channels":
                    kwargs["channels"] = tuple(x.strip() for x in raw.split(",") if x.strip())
                elif key in _SYNTH_KEYS:
                    try:
                        kwargs[key] = _SYNTH_KEYS[key](raw)
                    except ValueError:
                        raise ConfigError(path, f"cannot parse {raw!r}") from None
                else:
                    raise ConfigError(path, "unknown key")
        elif name.startswith("signature."):
            comp = name.split(".", 1)[1]
            if comp not in COMPONENTS:
                raise ConfigError(name, f"component must be one of {COMPONENTS}")
            sec = cp[name]
            unknown = set(sec) - {"band", "channels", "amplitude"}
            if unknown:
                raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
            for key in ("band", "channels", "amplitude"):
                if key not in sec:
                    raise ConfigError(f"{name}.{key}", "missing")
            try:
                sigs[comp] = Signature(
                    sec.get("band", "").strip(),
                    tuple(x.strip() for x in sec.get("channels", "").split(",") if x.strip()),
                    float(sec["amplitude"]),
                )
            except (DomainError, ValueError) as exc:
                raise ConfigError(name, str(exc)) from None
        else:
            raise ConfigError(name, "unknown section")
    if sigs:
        kwargs["signatures"] = sigs
    try:
        return SyntheticSpec(**kwargs)
    except DomainError as exc:
        raise ConfigError("synthetic", str(exc)) from None
