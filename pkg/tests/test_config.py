"""Config surface: defaults stay in lockstep with the owning modules."""

import json

import pytest

from hhmon import metrics, pose, tracking
from hhmon.clipset import AugmentConfig
from hhmon.config import (
    PipelineConfig,
    config_from_dict,
    dump_config,
    load_config,
)
from hhmon.errors import ConfigError
from hhmon.tvl1 import TvL1Params


def test_roi_defaults_track_the_pose_module():
    cfg = PipelineConfig()
    assert cfg.roi.margin == pose.DEFAULT_MARGIN
    assert cfg.roi.min_confidence == pose.DEFAULT_MIN_CONFIDENCE
    assert cfg.roi.min_joints == pose.DEFAULT_MIN_JOINTS


def test_link_defaults_track_the_tracking_module():
    cfg = PipelineConfig()
    assert cfg.link.tau_new == tracking.DEFAULT_TAU_NEW
    assert cfg.link.max_gap == tracking.DEFAULT_MAX_GAP
    assert cfg.link.smooth_window == tracking.DEFAULT_SMA_WINDOW


def test_clip_defaults_track_the_augment_config():
    cfg = PipelineConfig()
    aug = AugmentConfig()
    assert cfg.clip.scale_min == aug.scale_min
    assert cfg.clip.scale_max == aug.scale_max
    assert cfg.clip.flip_prob == aug.flip_prob
    assert cfg.clip.brightness_extent == aug.brightness_extent
    assert cfg.clip.input_size == aug.input_size
    assert cfg.clip.pos_stride == aug.pos_stride
    assert cfg.clip.neg_stride == aug.neg_stride


def test_flow_solver_defaults_track_the_tvl1_params():
    cfg = PipelineConfig()
    params = TvL1Params()
    assert cfg.flow.lam == params.lam
    assert cfg.flow.theta == params.theta
    assert cfg.flow.tau == params.tau
    assert cfg.flow.n_warps == params.n_warps
    assert cfg.flow.n_iters == params.n_iters
    assert cfg.flow.stop_epsilon == params.stop_epsilon
    assert cfg.flow.pyramid_factor == params.pyramid_factor
    assert cfg.flow.min_size == params.min_size
    # the displacement cap deliberately diverges from the library default:
    # desk scenes move a few px, so the pipeline clips much tighter
    assert cfg.flow.max_flow == 1.0


def test_eval_threshold_tracks_the_metrics_default():
    assert PipelineConfig().eval.threshold == metrics.DEFAULT_THRESHOLD


def test_dump_and_rebuild_roundtrip():
    cfg = PipelineConfig()
    cfg.seed = 42
    cfg.gen.n_rubbing = 7
    cfg.flow.max_flow = 2.5
    rebuilt = config_from_dict(json.loads(dump_config(cfg)))
    assert rebuilt == cfg


def test_partial_override_keeps_other_defaults():
    cfg = config_from_dict({"train": {"epochs": 3}, "seed": 5})
    assert cfg.train.epochs == 3
    assert cfg.train.lr == PipelineConfig().train.lr
    assert cfg.seed == 5
    assert cfg.gen == PipelineConfig().gen


def test_unknown_key_names_the_section():
    with pytest.raises(ConfigError, match="train: unknown keys warmup"):
        config_from_dict({"train": {"warmup": 2}})


def test_unknown_section_is_rejected():
    with pytest.raises(ConfigError, match="unknown config sections: optimizer"):
        config_from_dict({"optimizer": {}})


def test_seed_must_be_a_non_negative_integer():
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict({"seed": -1})
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict({"seed": "zero"})


def test_section_must_be_an_object():
    with pytest.raises(ConfigError, match="must be an object"):
        config_from_dict({"gen": [1, 2]})


def test_eval_mode_is_validated():
    with pytest.raises(ConfigError, match="eval mode"):
        config_from_dict({"eval": {"mode": "per-frame"}})
    assert config_from_dict({"eval": {"mode": "per-window"}}).eval.mode == "per-window"


def test_load_config_file_paths(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"gen": {"n_rubbing": 3}}))
    cfg = load_config(str(path))
    assert cfg.gen.n_rubbing == 3

    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.json"))

    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(bad))

    arr = tmp_path / "arr.json"
    arr.write_text("[1]")
    with pytest.raises(ConfigError, match="top level"):
        load_config(str(arr))


def test_seed_override_wins(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 3}))
    assert load_config(str(path)).seed == 3
    assert load_config(str(path), seed_override=9).seed == 9
    assert load_config(None, seed_override=4).seed == 4
    assert load_config(None).seed == 0


def test_dump_is_stable_json():
    text = dump_config(PipelineConfig())
    parsed = json.loads(text)
    assert set(parsed) == {"seed", "paths", "gen", "roi", "link", "clip",
                           "flow", "train", "eval"}
    assert text == dump_config(PipelineConfig())
