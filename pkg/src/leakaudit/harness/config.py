"""Flat key-value run configuration.

One file describes one run or one sweep. Lines are ``key = value``; blank
lines and ``#`` comments are ignored; unknown keys are errors. The full
key table lives in the README. Configs are deliberately diffable: a run's
provenance is the config plus the seed.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, fields

from ..regularizers import MECHANISMS


class ConfigError(ValueError):
    """A run configuration is malformed."""


def _parse_bool(raw):
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_int_list(raw):
    return [int(v) for v in raw.split(",") if v.strip()]


def _parse_float_list(raw):
    return [float(v) for v in raw.split(",") if v.strip()]


def _parse_partners(raw):
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if item == "none":
            out.append(("none", 0.0))
            continue
        name, _, value = item.partition(":")
        if not value:
            raise ConfigError(f"partner {item!r} must look like mechanism:value")
        out.append((name.strip(), float(value)))
    return out


@dataclass
class RunConfig:
    dataset: str = "synthetic"
    data_dir: str | None = None
    subset_n: int = 0  # 0 = use the full training split
    depth: int = 4
    mechanism: str = "none"
    value: float = 0.0
    pair_mechanism: str | None = None
    pair_value: float = 0.0
    epochs: int = 30
    lr: float = 2e-4
    batch: int = 128
    weight_decay: float = 1e-6
    precision: str = "float32"
    seeds: list = field(default_factory=lambda: [0])
    eval_n: int = 500
    attacker_fraction: float = 0.2
    dtc_n: int = 300
    salem_k: int = 3
    dp_sigma: float | None = None
    dp_clip: float = 1.0
    dp_delta: float = 1e-5
    sweep_values: list = field(default_factory=list)
    dp_sweep_sigmas: list = field(default_factory=list)
    pair_partners: list = field(default_factory=list)
    synthetic_n: int = 600
    synthetic_val_n: int = 600
    synthetic_classes: int = 10
    synthetic_margin: float = 1.0
    synthetic_size: int = 8

    def __post_init__(self):
        if self.dataset not in ("synthetic", "fmnist", "cifar10", "cifar100"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}")
        if self.pair_mechanism is not None and self.pair_mechanism not in MECHANISMS:
            raise ConfigError(f"unknown pair mechanism {self.pair_mechanism!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @property
    def resolved_data_dir(self):
        return self.data_dir or os.environ.get("LEAKAUDIT_DATA", "data")

    def mechanisms(self):
        pairs = [(self.mechanism, self.value)]
        if self.pair_mechanism is not None:
            pairs.append((self.pair_mechanism, self.pair_value))
        return pairs

    def training_fingerprint(self, seed):
        """Hash over every field that influences the trained parameters."""
        payload = {
            "dataset": self.dataset,
            "subset_n": self.subset_n,
            "depth": self.depth,
            "mechanisms": self.mechanisms(),
            "epochs": self.epochs,
            "lr": self.lr,
            "batch": self.batch,
            "weight_decay": self.weight_decay,
            "precision": self.precision,
            "dp": None if self.dp_sigma is None else [self.dp_sigma, self.dp_clip, self.dp_delta],
            "synthetic": [
                self.synthetic_n,
                self.synthetic_val_n,
                self.synthetic_classes,
                self.synthetic_margin,
                self.synthetic_size,
            ]
            if self.dataset == "synthetic"
            else None,
            "seed": seed,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_KEY_TABLE = {
    "dataset": ("dataset", str),
    "data_dir": ("data_dir", str),
    "subset_n": ("subset_n", int),
    "depth": ("depth", int),
    "mechanism": ("mechanism", str),
    "value": ("value", float),
    "pair_mechanism": ("pair_mechanism", str),
    "pair_value": ("pair_value", float),
    "epochs": ("epochs", int),
    "lr": ("lr", float),
    "batch": ("batch", int),
    "weight_decay": ("weight_decay", float),
    "precision": ("precision", str),
    "seeds": ("seeds", _parse_int_list),
    "eval_n": ("eval_n", int),
    "attacker_fraction": ("attacker_fraction", float),
    "dtc_n": ("dtc_n", int),
    "salem_k": ("salem_k", int),
    "dp.sigma": ("dp_sigma", float),
    "dp.clip": ("dp_clip", float),
    "dp.delta": ("dp_delta", float),
    "sweep.values": ("sweep_values", _parse_float_list),
    "dp_sweep.sigmas": ("dp_sweep_sigmas", _parse_float_list),
    "pairs.partners": ("pair_partners", _parse_partners),
    "synthetic.n": ("synthetic_n", int),
    "synthetic.val_n": ("synthetic_val_n", int),
    "synthetic.classes": ("synthetic_classes", int),
    "synthetic.margin": ("synthetic_margin", float),
    "synthetic.size": ("synthetic_size", int),
}


def parse_config_text(text, origin="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = key.strip(), value.strip()
        if key not in _KEY_TABLE:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        attr, convert = _KEY_TABLE[key]
        if attr in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        try:
            values[attr] = convert(value) if value != "" else None
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{origin}:{lineno}: bad value for {key!r}: {exc}") from exc
    values = {k: v for k, v in values.items() if v is not None}
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"{origin}: {exc}") from exc


def parse_config(path):
    with open(path, encoding="utf-8") as f:
        return parse_config_text(f.read(), origin=str(path))


def config_to_dict(cfg: RunConfig):
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def config_from_dict(d):
    return RunConfig(**d)
