"""Run configuration: key=value config files with CLI-flag override precedence."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, asdict

from .model import TrainingConfig


class RunConfigError(ValueError):
    """Bad config file or inconsistent option values."""


@dataclass
class RunConfig:
    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    rules_path: str = ""
    rules_format: str = "normalized"  # normalized | amie
    output_dir: str = "out"

    dim: int = 100
    lr: float = 0.001
    epochs: int = 500
    n_batches: int = 100
    margin_triple: float = 1.0
    margin_path: float = 1.0
    margin_relpair: float = 1.0
    alpha_paths: float = 1.0
    alpha_relpairs: float = 3.0
    norm: str = "L1"
    confidence_threshold: float = 0.7
    max_path_steps: int = 2
    path_cutoff: float = 0.01
    per_pair_cap: int = 200
    seed: int = 0
    disable_paths_and_r2: bool = False
    disable_r1: bool = False
    deterministic: bool = True

    top_k: int = 3

    def training_config(self) -> TrainingConfig:
        names = {f.name for f in fields(TrainingConfig)}
        values = {k: v for k, v in asdict(self).items() if k in names}
        cfg = TrainingConfig(**values)
        cfg.validate()
        return cfg

    def path_for(self, name: str) -> str:
        return os.path.join(self.output_dir, name)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw: str, where: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise RunConfigError(f"{where}: cannot parse {name}={raw!r} as {kind}") from None


def load_config_file(path: str | os.PathLike) -> RunConfig:
    cfg = RunConfig()
    apply_config_file(cfg, path)
    return cfg


def apply_config_file(cfg: RunConfig, path: str | os.PathLike) -> None:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            if "=" not in line:
                raise RunConfigError(f"{where}: expected key=value")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise RunConfigError(f"{where}: unknown option {key!r}")
            setattr(cfg, key, _coerce(key, raw.strip(), where))


def write_resolved_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in asdict(cfg).items():
            fh.write(f"{key} = {value}\n")
