"""Experiment configuration.

A config file is flat TOML: ``key = value`` lines with no tables.  Every
key has a default; unknown keys and wrongly typed values are rejected.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError

TASKS = ("toy", "rate", "lr", "cf", "lda")


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "lr"
    dataset: Optional[str] = None
    format: Optional[str] = None
    seed: int = 0
    iterations: int = 10
    threads: Union[int, str] = 4
    cores: int = 8
    partitions: int = 16
    weight_policy: str = "reweight"
    out: str = "results"
    record_timing: bool = False
    # logistic regression
    lr_dim: int = 784
    lr_classes: int = 10
    lr_samples: int = 2000
    lr_density: float = 0.05
    lr_eta: float = 0.5
    lr_reg: float = 1e-4
    # collaborative filtering
    cf_dim: int = 100
    cf_lam: float = 0.02
    cf_eta0: float = 0.1
    cf_users: int = 200
    cf_items: int = 100
    cf_rank: int = 5
    cf_density: float = 0.3
    # lda
    lda_topics: int = 20
    lda_vocab: int = 1000
    lda_alpha: float = 0.1
    lda_beta: float = 0.1
    lda_oversample: int = 10
    lda_docs: int = 200
    lda_doc_len: int = 80
    lda_test_docs: int = 40
    lda_sweeps: int = 20
    # toy experiment
    toy_n: int = 3000
    toy_m: int = 30
    toy_seeds: int = 50
    toy_stepsize: float = 1.0
    # rate lab
    rate_T: list = field(default_factory=lambda: [1, 2, 4])
    rate_m: list = field(default_factory=lambda: [1, 2, 4])
    rate_n: list = field(default_factory=lambda: [250, 500, 1000])
    rate_trials: int = 2000
    rate_budget_seconds: float = 600.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.format not in (None, "libsvm", "ratings", "bow"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.threads != "auto" and not (isinstance(self.threads, int) and self.threads >= 1):
            raise ConfigError("threads must be a positive integer or 'auto'")
        if self.weight_policy not in ("reweight", "unit"):
            raise ConfigError("weight_policy must be 'reweight' or 'unit'")
        for name in ("iterations", "cores", "partitions", "lda_oversample", "toy_seeds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _check_type(name: str, value, default):
    if name == "threads":
        return value
    if default is None:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(v, int) for v in value)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{name}: expected {type(default).__name__}, got {value!r}")
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    clean = {}
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"{key}: tables are not allowed; the config is flat")
        clean[key] = _check_type(key, value, getattr(defaults, key))
    return ExperimentConfig(**clean)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
