"""Experiment configuration: one JSON document drives every CLI command.

The file holds nested sections (grid, trajectory, splits, model, train,
rollout, export); command-line `--set a.b=c` overrides individual keys. The
fully resolved document is echoed into the output directory so a run can be
reproduced from its artifacts alone.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .fdtd import GridSpec, ObstacleSpec
from .models import ModelConfig

DEFAULTS: dict = {
    "seed": None,  # mandatory
    "out_dir": "out",
    "data_dir": "data",
    "grid": {"dims": [32, 32], "dx": 5e-7, "pml": 8},
    "trajectory": {
        "frames": 12,
        "stride": 25,
        "n_sources": 6,
        "wavelength": 1e-5,
        "amplitude_range": [0.5, 1.0],
        "warmup": 100,
        "obstacle_preset": None,  # null | "seen" (unseen test set is implied)
    },
    "splits": {"train": 32, "val": 4, "test": 4},
    "model": {"algebra": "sta2", "channels": None, "blocks": 20, "kernel": 3,
              "kind": "resnet"},
    "train": {"epochs": 50, "batch_size": 32, "lr": 1e-3},
    "rollout": {"m": 10},
    "export": {"sequences": [0], "steps": [1]},
}


def _merge(base: dict, patch: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in patch.items():
        where = f"{path}.{key}" if path else key
        if key not in base and path in ("grid", "trajectory", "splits", "model",
                                        "train", "rollout", "export"):
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_override(cfg: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override must look like section.key=value, got {spec!r}")
    dotted, raw = spec.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    keys = dotted.split(".")
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"unknown config section {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def load_config(path, overrides: list[str] = ()) -> dict:
    """Read, merge with defaults, apply overrides, validate the basics."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be an object, got {type(doc).__name__}")
    cfg = _merge(DEFAULTS, doc)
    for spec in overrides:
        _apply_override(cfg, spec)
    if cfg["seed"] is None:
        raise ConfigError("config must set a seed")
    base = Path(path).resolve().parent
    for key in ("out_dir", "data_dir"):
        if not Path(cfg[key]).is_absolute():
            cfg[key] = str(base / cfg[key])
    grid_spec(cfg)  # validate eagerly
    model_config(cfg)
    return cfg


def echo_config(cfg: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def grid_spec(cfg: dict) -> GridSpec:
    g = cfg["grid"]
    return GridSpec(dims=tuple(int(d) for d in g["dims"]), dx=float(g["dx"]),
                    pml=int(g["pml"]))


def model_config(cfg: dict) -> ModelConfig:
    m = cfg["model"]
    if m.get("kind", "resnet") not in ("resnet", "oracle", "persistence"):
        raise ConfigError(f"model.kind must be resnet|oracle|persistence, got {m['kind']!r}")
    channels = m["channels"]
    return ModelConfig(algebra=m["algebra"],
                       channels=None if channels is None else int(channels),
                       blocks=int(m["blocks"]), kernel=int(m["kernel"]))


def obstacle_preset(name: str | None, grid: GridSpec) -> list[list[ObstacleSpec]]:
    """Preset obstacle configurations scaled to the grid (cycled by sequence)."""
    if name is None:
        return [[]]
    doc = json.loads(
        resources.files("stapde").joinpath("data/obstacle_presets.json").read_text())
    if name not in ("seen", "unseen"):
        raise ConfigError(f"obstacle preset must be 'seen' or 'unseen', got {name!r}")
    if grid.spatial_dim != 2:
        raise ConfigError("obstacle presets are defined for 2D grids")
    eps = float(doc["rel_permittivity"])
    configs = []
    for entry in doc[name]:
        region = []
        for (f0, f1), dim in zip(entry["box"], grid.dims):
            lo, hi = int(round(f0 * dim)), int(round(f1 * dim))
            region.append((lo, max(hi, lo + 1)))
        configs.append([ObstacleSpec(tuple(region), eps)])
    return configs
