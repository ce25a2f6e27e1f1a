"""Run configuration: defaults, config files, and the echo file.

Precedence is command line > config file > defaults. Config files are
either plain ``key = value`` lines (# comments allowed) or a JSON object;
the echo file every run writes (config_echo.json) is itself a valid
config file, so a run can be reproduced by pointing --config at it.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigError
from .mixup import MixupConfig
from .trainer import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    """Every knob a run can turn, CLI and file alike."""

    dataset_dir: str | None = None
    synthetic: bool = False
    out: str = "cosmic_out"
    checkpoint: str | None = None

    n_way: int = 2
    k_shot: int = 1
    query_per_task: int = 10
    episodes: int = 1000
    subgraph_size: int = 10
    zeta: float = 0.15
    tau: float = 0.5
    hidden_dim: int = 1024
    lr_mc: float = 0.001
    lr_ce: float = 0.001
    mixup: str = "on"
    mixup_c: float = 10.0
    mixup_beta: float = 5.0
    weight_decay: float = 1.0
    seed: int = 0
    workers: int = 0
    precision: str = "f64"

    tasks: int = 100
    repetitions: int = 10
    export_embeddings: bool = False
    clustering: bool = False
    checkpoint_every: int = 0
    use_contrastive: bool = True
    self_correction: str = "same_view"

    def __post_init__(self):
        if self.n_way < 2:
            raise ConfigError("n_way must be at least 2")
        if self.k_shot < 1:
            raise ConfigError("k_shot must be at least 1")
        if self.query_per_task < 1:
            raise ConfigError("query_per_task must be at least 1")
        if self.episodes < 1 or self.tasks < 1 or self.repetitions < 1:
            raise ConfigError("episodes, tasks, repetitions must be >= 1")
        if self.subgraph_size < 1:
            raise ConfigError("subgraph_size must be at least 1")
        if not 0.0 < self.zeta <= 1.0:
            raise ConfigError("zeta must lie in (0, 1]")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be at least 1")
        if self.lr_mc < 0 or self.lr_ce <= 0:
            raise ConfigError("learning rates must be positive")
        if self.mixup not in ("on", "off"):
            raise ConfigError("mixup must be 'on' or 'off'")
        if self.mixup_c <= 0 or self.mixup_beta <= 0:
            raise ConfigError("mixup_c and mixup_beta must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.workers < 0:
            raise ConfigError("workers must be non-negative")
        if self.precision not in ("f32", "f64"):
            raise ConfigError("precision must be f32 or f64")
        if self.self_correction not in ("same_view", "all_pairs"):
            raise ConfigError("self_correction must be same_view or all_pairs")

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            episodes=self.episodes, n_way=self.n_way, k_shot=self.k_shot,
            q_per_task=self.query_per_task, lr_mc=self.lr_mc,
            lr_ce=self.lr_ce, tau=self.tau, zeta=self.zeta,
            subgraph_size=self.subgraph_size, hidden_dim=self.hidden_dim,
            mixup=MixupConfig(enabled=self.mixup == "on",
                              beta=self.mixup_beta, magnitude=self.mixup_c),
            seed=self.seed, checkpoint_every=self.checkpoint_every,
            use_contrastive=self.use_contrastive,
            self_correction=self.self_correction, precision=self.precision,
        )


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key '{name}'")
    ftype = _FIELD_TYPES[name]
    if isinstance(value, str):
        text = value.strip()
        if ftype in ("int", int):
            try:
                return int(text)
            except ValueError:
                raise ConfigError(f"{name}: '{text}' is not an integer") from None
        if ftype in ("float", float):
            try:
                return float(text)
            except ValueError:
                raise ConfigError(f"{name}: '{text}' is not a number") from None
        if ftype in ("bool", bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ConfigError(f"{name}: '{text}' is not a boolean")
        if text.lower() in ("none", "null", ""):
            return None
        return text
    if ftype in ("float", float) and isinstance(value, int):
        return float(value)
    return value


def parse_config_file(path) -> dict:
    """Key/value dict from a JSON object or key = value lines."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: bad JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return {k: _coerce(k, v) for k, v in raw.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, val = body.partition("=")
        out[key.strip()] = _coerce(key.strip(), val)
    return out


def build_run_config(file_path=None, overrides=None) -> RunConfig:
    """Defaults, then config file entries, then explicit overrides."""
    merged = {}
    if file_path is not None:
        merged.update(parse_config_file(file_path))
    if overrides:
        for k, v in overrides.items():
            if v is not None:
                merged[k] = _coerce(k, v)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def write_config_echo(cfg: RunConfig, path) -> None:
    """Full effective configuration, stable byte-for-byte across runs."""
    payload = dataclasses.asdict(cfg)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
