"""Pipeline configuration: nested blocks of plain dataclasses, loadable from
a JSON file that overrides any subset of fields.  Defaults here must stay in
lockstep with the owning modules' defaults; tests assert that.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class PathsConfig:
    dataset_dir: str = "data/dataset"
    work_dir: str = "data/work"
    checkpoint_dir: str = "data/checkpoints"
    report_dir: str = "data/reports"


@dataclass
class GenConfig:
    n_rubbing: int = 100
    n_other: int = 100
    n_synthetic_rubbing: int = 8
    n_dates: int = 12
    n_synthetic_dates: int = 2
    width: int = 96
    height: int = 72
    n_frames_min: int = 20
    n_frames_max: int = 26
    n_persons: int = 1
    joint_dropout: float = 0.0
    fps: float = 15.0


@dataclass
class RoiConfig:
    margin: float = 0.25
    min_confidence: float = 0.1
    min_joints: int = 4


@dataclass
class LinkConfig:
    tau_new: float = 0.1
    max_gap: int = 8
    smooth_window: int = 4


@dataclass
class ClipConfig:
    scale_min: float = 1.0
    scale_max: float = 1.75
    flip_prob: float = 0.5
    brightness_extent: float = 0.1
    input_size: int = 56
    pos_stride: int = 1
    neg_stride: int = 4


@dataclass
class FlowConfig:
    lam: float = 0.15
    theta: float = 0.3
    tau: float = 0.25
    n_warps: int = 5
    n_iters: int = 25
    stop_epsilon: float = 0.01
    pyramid_factor: float = 0.5
    min_size: int = 16
    # library default caps at 20 px; desk-scale scenes move 1-5 px per frame,
    # so 1 px keeps the stored flow from collapsing toward zero
    max_flow: float = 1.0


@dataclass
class TrainBlock:
    lr: float = 0.01
    head_lr: float = 0.5  # frozen-backbone logistic head tolerates a hotter step
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 10
    pretrain_epochs: int = 10
    stills_per_scene: int = 4


@dataclass
class EvalConfig:
    mode: str = "per-annotated-clip"  # or per-window
    threshold: float = 0.5

    def __post_init__(self):
        if self.mode not in ("per-annotated-clip", "per-window"):
            raise ConfigError(f"eval mode must be per-annotated-clip or per-window, "
                              f"got {self.mode!r}")


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    roi: RoiConfig = field(default_factory=RoiConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    clip: ClipConfig = field(default_factory=ClipConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    train: TrainBlock = field(default_factory=TrainBlock)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_BLOCK_TYPES = {"paths": PathsConfig, "gen": GenConfig, "roi": RoiConfig, "link": LinkConfig,
                "clip": ClipConfig, "flow": FlowConfig, "train": TrainBlock, "eval": EvalConfig}


def _build_block(cls, data: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}")


def config_from_dict(data: dict) -> PipelineConfig:
    data = dict(data)
    seed = data.pop("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    unknown = sorted(set(data) - set(_BLOCK_TYPES))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    blocks = {}
    for name, cls in _BLOCK_TYPES.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        blocks[name] = _build_block(cls, section, name)
    return PipelineConfig(seed=seed, **blocks)


def load_config(path: str | None, seed_override: int | None = None) -> PipelineConfig:
    """Defaults, overlaid with a JSON file if given, then the --seed flag."""
    if path is None:
        cfg = PipelineConfig()
    else:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        cfg = config_from_dict(data)
    if seed_override is not None:
        cfg.seed = seed_override
    return cfg


def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=1, sort_keys=True)
