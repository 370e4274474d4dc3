"""Experiment configuration: loading, validation, defaults and hashing.

Config files are YAML flow or block mappings; plain JSON is accepted as-is
since it is a subset. Unknown keys are rejected so a typo never silently
falls back to a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from pikan.pde import ALIASES, PROBLEMS

DEFAULT_WIDTHS = {
    "kan": [2, 20, 20, 20, 1],
    "mlp": [2, 64, 64, 64, 64, 64, 64, 1],
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass
class ExperimentConfig:
    problem: str = "helmholtz"
    model: str = "kan"
    widths: list[int] | None = None
    grid_size: int = 20
    order: int = 4
    weighting: str = "dbaw"
    weights: dict[str, float] = field(default_factory=lambda: {"r": 1.0, "ic": 1.0, "bc": 1.0})
    gamma_max: float = 100.0
    gamma_min: float = 1.0
    alpha: float = 1e-4
    epsilon: float = 1e-12
    smoothness: float = 0.0
    epochs: int = 50000
    lr_theta: float = 1e-3
    lr_sigma: float = 1e-3
    n_r: int = 5000
    n_bc: int = 400
    n_ic: int = 400
    seed: int = 0
    eval_grid: list[int] | None = None
    eval_every: int = 100
    grad_clip: float | None = None
    label: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        self.resolve()

    def resolve(self) -> "ExperimentConfig":
        """Fill model/problem dependent defaults, normalise types, validate."""
        name = str(self.problem).lower()
        self.problem = ALIASES.get(name, name)
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown problem {self.problem!r}; "
                              f"choose from {sorted(PROBLEMS)}", "problem")
        self.model = str(self.model).lower()
        if self.model not in DEFAULT_WIDTHS:
            raise ConfigError(f"model: must be 'kan' or 'mlp', got {self.model!r}", "model")
        self.weighting = str(self.weighting).lower()
        if self.weighting not in ("fixed", "dbaw"):
            raise ConfigError(f"weighting: must be 'fixed' or 'dbaw', got {self.weighting!r}",
                              "weighting")
        if self.widths is None:
            self.widths = list(DEFAULT_WIDTHS[self.model])
        if not isinstance(self.widths, (list, tuple)):
            raise ConfigError("widths: must be a list of integers", "widths")
        self.widths = [_as_int(w, "widths") for w in self.widths]
        if len(self.widths) < 2 or self.widths[0] != 2 or self.widths[-1] != 1:
            raise ConfigError(f"widths: must start with 2 and end with 1, got {self.widths}",
                              "widths")
        if min(self.widths) < 1:
            raise ConfigError("widths: every layer needs at least one unit", "widths")
        for key in ("grid_size", "epochs", "n_r", "n_bc", "n_ic", "eval_every", "seed", "order"):
            setattr(self, key, _as_int(getattr(self, key), key))
        for key in ("grid_size", "n_r", "n_bc", "n_ic", "eval_every"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be positive, got {getattr(self, key)}", key)
        for key in ("epochs", "seed", "order"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key}: must be non-negative, got {getattr(self, key)}", key)
        for key in ("gamma_max", "gamma_min", "alpha", "epsilon", "smoothness", "lr_theta",
                    "lr_sigma"):
            setattr(self, key, _as_float(getattr(self, key), key))
        if not self.gamma_max > self.gamma_min > 0:
            raise ConfigError("gamma_max: need gamma_max > gamma_min > 0", "gamma_max")
        for key in ("alpha", "epsilon", "lr_theta", "lr_sigma"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key}: must be positive", key)
        if self.smoothness < 0:
            raise ConfigError("smoothness: must be non-negative", "smoothness")
        if not isinstance(self.weights, dict):
            raise ConfigError("weights: must be a mapping task -> weight", "weights")
        self.weights = {str(k): _as_float(v, "weights") for k, v in self.weights.items()}
        for k, v in self.weights.items():
            if k not in ("r", "ic", "bc"):
                raise ConfigError(f"weights: unknown task {k!r}", "weights")
            if not v > 0:
                raise ConfigError(f"weights: weight for {k!r} must be positive", "weights")
        if self.eval_grid is not None:
            if not isinstance(self.eval_grid, (list, tuple)):
                raise ConfigError("eval_grid: must be two integers", "eval_grid")
            self.eval_grid = [_as_int(n, "eval_grid") for n in self.eval_grid]
            if len(self.eval_grid) != 2 or min(self.eval_grid) < 2:
                raise ConfigError("eval_grid: must be two integers >= 2", "eval_grid")
        if self.grad_clip is not None:
            self.grad_clip = _as_float(self.grad_clip, "grad_clip")
            if not self.grad_clip > 0:
                raise ConfigError("grad_clip: must be positive", "grad_clip")
        return self

    # ------------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def run_label(self) -> str:
        if self.label:
            return self.label
        model = {"kan": "PIKAN", "mlp": "PINN"}[self.model]
        return f"DBAW-{model}" if self.weighting == "dbaw" else model

    def config_hash(self) -> str:
        """Content hash of everything that affects the numbers (not the output path)."""
        d = self.to_dict()
        d.pop("output_dir", None)
        d.pop("label", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def counts(self) -> dict[str, int]:
        return {"n_r": self.n_r, "n_bc": self.n_bc, "n_ic": self.n_ic}


def _as_int(v, key: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{key}: expected an integer, got {v!r}", key)
    return int(v)


def _as_float(v, key: str) -> float:
    if isinstance(v, str):
        # YAML 1.1 reads exponent literals without a dot (1e-4) as strings
        try:
            return float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}", key)
    return float(v)


FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))


def parse_text(text: str, source: str = "<config>") -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{source}: parse error at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return data


def from_dict(data: dict[str, Any]) -> ExperimentConfig:
    for key in data:
        if key not in FIELD_NAMES:
            raise ConfigError(f"unknown key {key!r}", str(key))
    return ExperimentConfig(**data)


def load_config(path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    data = parse_text(text, str(path))
    data.update(overrides or {})
    return from_dict(data)


def write_resolved(cfg: ExperimentConfig, path) -> Path:
    """Echo the fully resolved config; loading it back gives an equal config."""
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
