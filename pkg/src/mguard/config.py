"""Run configuration: INI defaults, file values, CLI overrides, provenance.

Precedence is defaults < config file < CLI flags. Every subcommand writes
its fully resolved view next to its outputs so a run is reproducible from
the artifacts alone.
"""

from __future__ import annotations

import configparser
import hashlib
from pathlib import Path

from .errors import ConfigError

DEFAULTS: dict[str, dict[str, str]] = {
    "synth": {
        "buildings": "50",
        "hours": "500",
        "anomaly_rate": "0.02",
        "noise_std": "0.4",
        "start": "2016-01-01T00:00:00",
    },
    "data": {
        "window_length": "60",
        "train_stride": "1",
        "eval_stride": "60",
        "holdout": "0.1",
        "clip_c": "3.5",
        "test_fraction": "0.0",
    },
    "model": {
        "latent_dim": "100",
        "hidden_sizes": "32,64,128",
        "disc_hidden": "100",
    },
    "training": {
        "epochs": "20",
        "batch_size": "32",
        "alpha": "2e-4",
        "beta1": "0.5",
        "beta2": "0.999",
        "latent_std": "0.1",
        "checkpoint_every": "5",
    },
    "detection": {
        "lam": "0.1",
        "steps": "300",
        "lr": "1e-2",
        "restarts": "1",
        "chunk": "64",
    },
    "cli": {
        "seed": "0",
    },
}


class RunConfig:
    """Merged view over defaults, an optional INI file, and flag overrides."""

    def __init__(self, path=None):
        self.values = {section: dict(keys) for section, keys in DEFAULTS.items()}
        if path is not None:
            parser = configparser.ConfigParser()
            read = parser.read(path)
            if not read:
                raise ConfigError(f"config file not found: {path}")
            for section in parser.sections():
                if section not in self.values:
                    raise ConfigError(f"unknown config section [{section}]")
                for key, value in parser.items(section):
                    if key not in self.values[section]:
                        raise ConfigError(f"unknown config key {key!r} in [{section}]")
                    self.values[section][key] = value

    def override(self, section: str, key: str, value) -> None:
        if value is None:
            return
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        self.values[section][key] = str(value)

    def _get(self, section: str, key: str) -> str:
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError(f"missing config key [{section}] {key}") from None

    def get_int(self, section: str, key: str) -> int:
        raw = self._get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from None

    def get_float(self, section: str, key: str) -> float:
        raw = self._get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from None

    def get_str(self, section: str, key: str) -> str:
        return self._get(section, key)

    def get_int_list(self, section: str, key: str) -> tuple[int, ...]:
        raw = self._get(section, key)
        try:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be comma-separated integers, got {raw!r}") from None

    def render(self) -> str:
        lines = []
        for section in sorted(self.values):
            lines.append(f"[{section}]")
            for key in sorted(self.values[section]):
                lines.append(f"{key} = {self.values[section][key]}")
            lines.append("")
        return "\n".join(lines)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.render().encode()).hexdigest()[:12]

    def write_resolved(self, out_dir, command: str) -> str:
        path = Path(out_dir) / f"config_{command}.ini"
        path.write_text(self.render())
        return str(path)
