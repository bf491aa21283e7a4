"""Run configuration: one JSON document, strict keys, defaults filled in.

Layout::

    {
      "seed": 0,
      "output_dir": null,
      "precision_report": false,
      "domains": {"mine": {"kind": "synthetic", "delta": 0.5, ...}},
      "surface": {"domain": "appendixF", "alpha": "tune", ...},
      ...
    }

Each command reads only its own block; blocks for other commands may be present
and are validated but ignored. Unknown keys anywhere are errors.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .kernels import KernelSpec
from .mrp import PRESETS, GaussianMRP, domain_from_dict

COMMANDS = ("verify", "surface", "train", "ablate", "transfer", "baseline")


class ConfigError(ValueError):
    pass


@dataclass
class KernelBlock:
    family: str = "exponential"
    temperature: float = 1.0

    def spec(self) -> KernelSpec:
        return KernelSpec.from_dict({"family": self.family, "temperature": self.temperature})


@dataclass
class GridBlock:
    low: float = 1e-2
    high: float = 1e1
    points: int = 25


@dataclass
class VerifyBlock:
    instances: int = 200
    tolerance: float = 1e-9
    lemma_prompts: int = 50
    offset_queries: int = 20


@dataclass
class SurfaceBlock:
    domain: str = "appendixF"
    n_context: int = 32
    layers: int = 30
    grid_size: int = 21
    alpha: Any = "tune"
    kernel: KernelBlock = field(default_factory=KernelBlock)
    tune_grid: GridBlock = field(default_factory=GridBlock)


@dataclass
class TrainBlock:
    domains: list = field(default_factory=lambda: ["appendixF"])
    optimizer: str = "adam"
    learning_rate: float = 0.01
    steps: int = 200
    batch_size: int = 32
    eval_size: int = 32
    n_context: int = 32
    layers: int = 30
    alpha_init: float = 0.1
    max_step: Any = None
    kernel: KernelBlock = field(default_factory=KernelBlock)
    grid: GridBlock = field(default_factory=GridBlock)


@dataclass
class AblateBlock:
    domain: str = "appendixF"
    axis: str = "context"
    values: list = field(default_factory=lambda: [2, 4, 8, 16, 32])
    fixed_other: int = 32
    alpha: float = 1.0
    seeds: int = 1
    grid_size: int = 21
    kernel: KernelBlock = field(default_factory=KernelBlock)


@dataclass
class TransferBlock(TrainBlock):
    train_domains: list = field(default_factory=lambda: ["appendixF", "appendixF_m4_x2"])
    eval_domains: list = field(default_factory=lambda: ["appendixF", "sharp_delta02"])


@dataclass
class BaselineBlock(TrainBlock):
    domain: str = "appendixF"
    optimizer: str = "grid_search"
    grid_size: int = 21


BLOCKS = {"verify": VerifyBlock, "surface": SurfaceBlock, "train": TrainBlock,
          "ablate": AblateBlock, "transfer": TransferBlock, "baseline": BaselineBlock}


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: Any = None
    precision_report: bool = False
    domains: dict = field(default_factory=dict)
    verify: VerifyBlock = field(default_factory=VerifyBlock)
    surface: SurfaceBlock = field(default_factory=SurfaceBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    ablate: AblateBlock = field(default_factory=AblateBlock)
    transfer: TransferBlock = field(default_factory=TransferBlock)
    baseline: BaselineBlock = field(default_factory=BaselineBlock)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = _build(cls, data, "")
        for name, spec in cfg.domains.items():
            try:
                domain_from_dict(spec)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"domains.{name}: {exc}") from None
        return cfg.validate()

    def validate(self) -> "RunConfig":
        from .training import AXES, OPTIMIZERS

        for name in ("train", "transfer", "baseline"):
            block = getattr(self, name)
            if block.optimizer not in OPTIMIZERS:
                raise ConfigError(f"{name}.optimizer: must be one of {OPTIMIZERS}, got {block.optimizer!r}")
            if block.max_step is not None and not isinstance(block.max_step, (int, float)):
                raise ConfigError(f"{name}.max_step: expected a number or null")
        if self.ablate.axis not in AXES:
            raise ConfigError(f"ablate.axis: must be one of {AXES}, got {self.ablate.axis!r}")
        alpha = self.surface.alpha
        if alpha != "tune" and (isinstance(alpha, bool) or not isinstance(alpha, (int, float))):
            raise ConfigError(f"surface.alpha: expected a number or \"tune\", got {alpha!r}")
        for name in ("surface", "train", "ablate", "transfer", "baseline"):
            try:
                getattr(self, name).kernel.spec()
            except ValueError as exc:
                raise ConfigError(f"{name}.kernel: {exc}") from None
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {self.seed!r}")
        return self

    def domain(self, name: str) -> GaussianMRP:
        if name in self.domains:
            return domain_from_dict({"name": name, **self.domains[name]})
        if name in PRESETS:
            return PRESETS[name]
        raise ConfigError(f"unknown domain {name!r}; define it under 'domains' or use one of {sorted(PRESETS)}")

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True)


_SCALARS = {int: (int,), float: (int, float), bool: (bool,), str: (str,)}


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f" in '{path}'" if path else ""
        raise ConfigError(f"unknown key(s){where}: {', '.join(unknown)}; allowed: {', '.join(sorted(fields))}")
    kwargs = {}
    hints = {f.name: f.type for f in dataclasses.fields(cls)}
    for name, value in data.items():
        key = f"{path}.{name}" if path else name
        target = _resolve_type(hints[name])
        if dataclasses.is_dataclass(target):
            kwargs[name] = _build(target, value, key)
        else:
            kwargs[name] = _coerce(target, value, key)
    return cls(**kwargs)


def _resolve_type(hint):
    if isinstance(hint, str):
        return {"int": int, "float": float, "bool": bool, "str": str, "list": list, "dict": dict, "Any": Any,
                **{c.__name__: c for c in (KernelBlock, GridBlock, *BLOCKS.values())}}.get(hint, Any)
    return hint


def _coerce(target, value, key):
    if target is Any:
        return value
    if target in (list, dict):
        if not isinstance(value, target):
            raise ConfigError(f"{key}: expected {target.__name__}, got {type(value).__name__}")
        return value
    ok = _SCALARS[target]
    if isinstance(value, bool) and target is not bool:
        raise ConfigError(f"{key}: expected {target.__name__}, got bool")
    if not isinstance(value, ok):
        raise ConfigError(f"{key}: expected {target.__name__}, got {type(value).__name__}")
    return float(value) if target is float else value


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return RunConfig.from_dict(data)
