"""Run configuration: presets, TOML loading, validation and resolved snapshots.

A config file has a ``[preset]`` table naming the experiment, a flat
``[run]`` table overriding any field, and an optional ``[noise]`` table.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

PRESET_NAMES = ("leapfrog", "turbulent", "viscous-import", "custom")
NOISY_QUBIT_CAP = 8


@dataclass
class RunConfig:
    preset: str = "custom"
    # initial data
    positions: list[list[float]] = field(default_factory=list)
    strengths: list[float] = field(default_factory=list)
    n_random_vortices: int = 0
    random_box: float = 1.0
    c0: list[float] | None = None
    # ground truth
    truth_csv: str = ""
    dt: float = 0.01
    t_end: float = 1.0
    # training window (in truth frames)
    train_stride: int = 1
    n_train_frames: int = 2
    pair_strides: list[int] = field(default_factory=lambda: [1])
    model: str = "hamiltonian"  # hamiltonian | vqa
    fit_iters: int = 500
    vqa_depth: int = 2
    vqa_iters: int = 300
    vqa_lr: float = 0.05
    vqa_optimizer: str = "adam"
    # prediction
    n_t: int = 1
    dt_predict: float = 0.01
    predict_from: str = "end"  # end of training window | start
    sampling_proportion: float = 1.0
    # read-out and reconstruction
    n_variants: int = 50
    shots: int = 0  # 0 means exact expectations
    readout_mitigation: bool = True
    fig_times: list[float] = field(default_factory=list)
    field_nx: int = 41
    field_ny: int = 41
    field_margin: float = 0.5
    field_delta: float = -1.0  # negative selects the grid-relative default
    sp_values: list[float] = field(default_factory=lambda: [0.1, 0.4, 0.7, 1.0])
    sp_seeds: int = 20
    seed: int = 0
    out: str = "out"
    noise: dict[str, Any] = field(default_factory=dict)

    # -- derived -------------------------------------------------------------
    @property
    def c0_complex(self) -> complex | None:
        return None if self.c0 is None else complex(self.c0[0], self.c0[1])

    @property
    def n_truth_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def train_end_frame(self) -> int:
        return (self.n_train_frames - 1) * self.train_stride

    def validate(self) -> "RunConfig":
        if self.preset not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESET_NAMES}")
        for name in ("dt", "t_end", "dt_predict"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if self.preset != "viscous-import" and not self.truth_csv:
            if not self.positions and self.n_random_vortices < 1:
                raise ConfigError("config needs vortex positions or n_random_vortices")
            if self.positions:
                if any(len(p) != 2 for p in self.positions):
                    raise ConfigError("positions must be [x, y] pairs")
                if len(self.strengths) != len(self.positions):
                    raise ConfigError("strengths and positions differ in length")
        if self.c0 is not None and len(self.c0) != 2:
            raise ConfigError("c0 must be [re, im]")
        if self.train_stride < 1 or self.n_train_frames < 2:
            raise ConfigError("need train_stride >= 1 and n_train_frames >= 2")
        if not self.pair_strides or min(self.pair_strides) < 1:
            raise ConfigError("pair_strides must be positive integers")
        if self.model not in ("hamiltonian", "vqa"):
            raise ConfigError(f"model must be 'hamiltonian' or 'vqa', got {self.model!r}")
        if self.n_t < 1:
            raise ConfigError("n_t must be >= 1")
        if self.predict_from not in ("end", "start"):
            raise ConfigError("predict_from must be 'end' or 'start'")
        if not 0 < self.sampling_proportion <= 1:
            raise ConfigError("sampling_proportion must lie in (0, 1]")
        if any(not 0 < s <= 1 for s in self.sp_values):
            raise ConfigError("sp_values must lie in (0, 1]")
        if self.shots < 0 or self.n_variants < 1:
            raise ConfigError("shots must be >= 0 and n_variants >= 1")
        if self.field_nx < 2 or self.field_ny < 2:
            raise ConfigError("field grids need at least 2 nodes per axis")
        if self.vqa_optimizer not in ("adam", "linesearch"):
            raise ConfigError(f"unknown VQA optimizer {self.vqa_optimizer!r}")
        return self


LEAPFROG = dict(
    preset="leapfrog",
    positions=[[0.0, 1.0], [0.0, 0.3], [0.0, -1.0], [0.0, -0.3]],
    strengths=[1.0, 1.0, -1.0, -1.0],
    c0=[-1.7903, 0.0],
    dt=0.01, t_end=82.0,
    train_stride=18, n_train_frames=101, pair_strides=[1],
    model="hamiltonian",
    n_t=6, dt_predict=1.0, predict_from="end",
    fig_times=[24.0, 44.0, 62.0, 81.0],
)

# Sampling law, box size and time unit here are local choices.
TURBULENT = dict(
    preset="turbulent",
    n_random_vortices=8, random_box=1.0,
    dt=0.01, t_end=25.6,
    train_stride=20, n_train_frames=65, pair_strides=[1],
    model="vqa", vqa_depth=4, vqa_iters=150,
    n_t=9, dt_predict=0.05, predict_from="start",
    fig_times=[6.4, 19.2],
    field_nx=61, field_ny=61,
)

VISCOUS = dict(
    preset="viscous-import",
    dt=0.1, t_end=1.5,
    train_stride=1, n_train_frames=4, pair_strides=[1, 2],
    model="vqa", vqa_depth=2, vqa_iters=400,
    n_t=4, dt_predict=0.1, predict_from="start",
)

PRESETS: dict[str, dict] = {"leapfrog": LEAPFROG, "turbulent": TURBULENT,
                            "viscous-import": VISCOUS, "custom": {}}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    default = _FIELDS[name].default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if name == "c0" and isinstance(value, (int, float)):
        return [float(value), 0.0]
    return value


def build_config(preset: str = "custom", overrides: dict | None = None) -> RunConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESET_NAMES}")
    values = dict(PRESETS[preset])
    values["preset"] = preset
    for k, v in (overrides or {}).items():
        values[k] = _coerce(k, v)
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:  # pragma: no cover - guarded by _coerce
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path: str | Path | None, preset: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    doc: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
    unknown = set(doc) - {"preset", "run", "noise"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    name = preset or doc.get("preset", {}).get("name", "custom")
    merged = dict(doc.get("run", {}))
    if "noise" in doc:
        merged["noise"] = doc["noise"]
    merged.update(overrides or {})
    return build_config(name, merged)


def to_document(cfg: RunConfig) -> dict:
    body = {k: v for k, v in dataclasses.asdict(cfg).items() if k not in ("preset", "noise")}
    body = {k: v for k, v in body.items() if v is not None}
    doc = {"preset": {"name": cfg.preset}, "run": body}
    if cfg.noise:
        doc["noise"] = cfg.noise
    return doc


def write_snapshot(cfg: RunConfig, directory: str | Path, name: str = "resolved_config.toml") -> Path:
    path = Path(directory) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(tomli_w.dumps(_plain(to_document(cfg))).encode())
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
