"""Deterministic procedural generator of labeled multi-person scenes.

Each person is an articulated stick figure rendered over a static noise
background.  Class 1 ("rubbing") persons oscillate both wrists toward and
away from each other near the body midline at high frequency; class 0
("other") persons sweep one arm through a slow, large arc.  Motion, not
appearance, is the discriminative signal.  Generation is a pure function of
the scene spec: the same seed reproduces frame and keypoint files byte for
byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import frameio, pose
from .clipset import AnnotationRecord
from .errors import ConfigError, DataError
from .frameio import Frame, FrameSequence
from .pose import PoseFrame

OTHER_ACTIONS = ("intubating", "wearing_gloves", "removing_gloves")

DEFAULT_WIDTH, DEFAULT_HEIGHT = 160, 120


@dataclass
class PersonMotion:
    """Trajectory parameters for one stick figure.  Lengths are fractions of
    the torso scale unless stated otherwise."""

    kind: str  # rubbing | other | idle
    base_x: float  # neck position, px
    base_y: float
    scale: float  # torso length, px
    freq: float = 0.25  # primary oscillation, cycles/frame
    amp: float = 0.19
    phase: float = 0.0
    arm_side: int = 1  # +1 right arm leads, -1 left (kind "other")
    sway_amp: float = 0.02
    sway_freq: float = 0.013
    shade: float = 0.2  # stroke intensity


@dataclass
class SceneSpec:
    seed: int
    class_label: int = 1
    n_persons: int = 1
    n_frames: int = 48
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    fps: float = 15.0
    video_id: str = "scene"
    date_tag: str = "d00"
    action_name: str = ""
    synthetic: bool = False
    joint_dropout: float = 0.0
    motion_params: list[PersonMotion] | None = None

    def __post_init__(self):
        if self.n_persons < 1:
            raise ConfigError(f"n_persons must be >= 1, got {self.n_persons}")
        if self.n_frames < 16:
            raise ConfigError(f"n_frames must be >= 16, got {self.n_frames}")
        if self.class_label not in (0, 1):
            raise ConfigError(f"class_label must be 0 or 1, got {self.class_label}")


def default_motion(spec: SceneSpec, rng: np.random.Generator) -> list[PersonMotion]:
    """Person 0 performs the scene's class action; extra persons idle nearby."""
    persons = []
    scale = min(spec.height / 3.3, spec.width / (2.2 * spec.n_persons))
    for i in range(spec.n_persons):
        slot = (i + 1) / (spec.n_persons + 1)
        base_x = slot * spec.width + rng.uniform(-0.02, 0.02) * spec.width
        base_y = 0.24 * spec.height + rng.uniform(-0.02, 0.02) * spec.height
        kind = ("rubbing" if spec.class_label == 1 else "other") if i == 0 else "idle"
        if kind == "rubbing":
            freq = rng.uniform(0.22, 0.28)
            amp = rng.uniform(0.16, 0.22)
        elif kind == "other":
            freq = rng.uniform(0.020, 0.028)
            amp = rng.uniform(0.9, 1.2)  # arc half-angle, radians
        else:
            freq = rng.uniform(0.008, 0.015)
            amp = rng.uniform(0.01, 0.03)
        persons.append(PersonMotion(
            kind=kind, base_x=base_x, base_y=base_y, scale=scale,
            freq=freq, amp=amp, phase=rng.uniform(0, 2 * np.pi),
            arm_side=1 if rng.random() < 0.5 else -1,
            sway_amp=rng.uniform(0.01, 0.025), sway_freq=rng.uniform(0.008, 0.018),
            shade=rng.uniform(0.12, 0.28),
        ))
    return persons


def skeleton_at(motion: PersonMotion, t: int) -> np.ndarray:
    """18 joint (x, y) positions at frame t, COCO-18 order."""
    s = motion.scale
    sway = motion.sway_amp * s * np.sin(2 * np.pi * motion.sway_freq * t + motion.phase)
    cx = motion.base_x + sway
    cy = motion.base_y
    j = np.zeros((pose.N_JOINTS, 2))

    def put(idx, dx, dy):
        j[idx] = (cx + dx * s, cy + dy * s)

    put(pose.NECK, 0.0, 0.0)
    put(pose.NOSE, 0.0, -0.30)
    put(pose.R_EYE, -0.07, -0.36)
    put(pose.L_EYE, 0.07, -0.36)
    put(pose.R_EAR, -0.14, -0.33)
    put(pose.L_EAR, 0.14, -0.33)
    put(pose.R_SHOULDER, -0.30, 0.05)
    put(pose.L_SHOULDER, 0.30, 0.05)
    put(pose.R_HIP, -0.18, 0.95)
    put(pose.L_HIP, 0.18, 0.95)
    put(pose.R_KNEE, -0.20, 1.48)
    put(pose.L_KNEE, 0.20, 1.48)
    put(pose.R_ANKLE, -0.22, 2.0)
    put(pose.L_ANKLE, 0.22, 2.0)

    w = 2 * np.pi * motion.freq * t + motion.phase
    if motion.kind == "rubbing":
        # both wrists meet near the chest midline, high-frequency in/out
        half = (0.30 + motion.amp * np.sin(w)) * 0.5
        wob = 0.06 * np.sin(w + np.pi / 2)
        j[pose.R_WRIST] = (cx - half * s, cy + (0.55 + wob) * s)
        j[pose.L_WRIST] = (cx + half * s, cy + (0.55 - wob) * s)
    elif motion.kind == "other":
        # one arm sweeps a slow, wide arc; the other hangs
        lead = pose.R_WRIST if motion.arm_side > 0 else pose.L_WRIST
        hang = pose.L_WRIST if motion.arm_side > 0 else pose.R_WRIST
        sh = j[pose.R_SHOULDER] if motion.arm_side > 0 else j[pose.L_SHOULDER]
        other_sh = j[pose.L_SHOULDER] if motion.arm_side > 0 else j[pose.R_SHOULDER]
        ang = np.pi / 2 + motion.amp * np.sin(w)  # pi/2 hangs straight down
        reach = 0.85 * s
        j[lead] = (sh[0] + motion.arm_side * reach * np.cos(ang), sh[1] + reach * np.sin(ang))
        j[hang] = (other_sh[0], other_sh[1] + 0.85 * s)
    else:
        j[pose.R_WRIST] = (j[pose.R_SHOULDER][0] - 0.02 * s, cy + 0.88 * s)
        j[pose.L_WRIST] = (j[pose.L_SHOULDER][0] + 0.02 * s, cy + 0.88 * s)

    # elbows: halfway shoulder->wrist, pushed outward from the torso
    for sh_i, wr_i, el_i, side in (
        (pose.R_SHOULDER, pose.R_WRIST, pose.R_ELBOW, -1),
        (pose.L_SHOULDER, pose.L_WRIST, pose.L_ELBOW, 1),
    ):
        mid = (j[sh_i] + j[wr_i]) / 2.0
        j[el_i] = (mid[0] + side * 0.10 * s, mid[1] + 0.05 * s)
    return j


_LIMBS = (
    (pose.NECK, pose.NOSE),
    (pose.NECK, pose.R_SHOULDER), (pose.NECK, pose.L_SHOULDER),
    (pose.R_SHOULDER, pose.R_ELBOW), (pose.R_ELBOW, pose.R_WRIST),
    (pose.L_SHOULDER, pose.L_ELBOW), (pose.L_ELBOW, pose.L_WRIST),
    (pose.NECK, pose.R_HIP), (pose.NECK, pose.L_HIP),
    (pose.R_HIP, pose.L_HIP),
    (pose.R_HIP, pose.R_KNEE), (pose.R_KNEE, pose.R_ANKLE),
    (pose.L_HIP, pose.L_KNEE), (pose.L_KNEE, pose.L_ANKLE),
)


def _draw_segment(img: np.ndarray, p0, p1, color: np.ndarray, width: float = 1.4) -> None:
    h, w = img.shape[:2]
    x_lo = int(max(0, np.floor(min(p0[0], p1[0]) - width - 1)))
    x_hi = int(min(w, np.ceil(max(p0[0], p1[0]) + width + 2)))
    y_lo = int(max(0, np.floor(min(p0[1], p1[1]) - width - 1)))
    y_hi = int(min(h, np.ceil(max(p0[1], p1[1]) + width + 2)))
    if x_hi <= x_lo or y_hi <= y_lo:
        return
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    seg_len2 = dx * dx + dy * dy
    if seg_len2 < 1e-12:
        t = np.zeros_like(xs, dtype=np.float64)
    else:
        t = np.clip(((xs - p0[0]) * dx + (ys - p0[1]) * dy) / seg_len2, 0.0, 1.0)
    px = p0[0] + t * dx
    py = p0[1] + t * dy
    dist = np.sqrt((xs - px) ** 2 + (ys - py) ** 2)
    alpha = np.clip(width - dist, 0.0, 1.0).astype(np.float32)[:, :, None]
    img[y_lo:y_hi, x_lo:x_hi] = img[y_lo:y_hi, x_lo:x_hi] * (1 - alpha) + color[None, None, :] * alpha


def _draw_disc(img: np.ndarray, center, radius: float, color: np.ndarray) -> None:
    h, w = img.shape[:2]
    x_lo = int(max(0, np.floor(center[0] - radius - 1)))
    x_hi = int(min(w, np.ceil(center[0] + radius + 2)))
    y_lo = int(max(0, np.floor(center[1] - radius - 1)))
    y_hi = int(min(h, np.ceil(center[1] + radius + 2)))
    if x_hi <= x_lo or y_hi <= y_lo:
        return
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    dist = np.sqrt((xs - center[0]) ** 2 + (ys - center[1]) ** 2)
    alpha = np.clip(radius - dist + 0.5, 0.0, 1.0).astype(np.float32)[:, :, None]
    img[y_lo:y_hi, x_lo:x_hi] = img[y_lo:y_hi, x_lo:x_hi] * (1 - alpha) + color[None, None, :] * alpha


def _background(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth static value-noise texture in mid grays."""
    gw, gh = max(2, width // 16), max(2, height // 16)
    grid = rng.uniform(0.40, 0.72, size=(gh, gw, 3)).astype(np.float32)
    coarse = Frame(grid)
    return frameio.resize_bilinear(coarse, width, height).data.copy()


def generate_scene(spec: SceneSpec) -> tuple[FrameSequence, list[PoseFrame], AnnotationRecord]:
    """Render a scene and its keypoint ground truth."""
    rng = np.random.default_rng(spec.seed)
    motions = spec.motion_params or default_motion(spec, rng)
    if len(motions) != spec.n_persons:
        raise ConfigError(f"motion_params must list {spec.n_persons} persons, got {len(motions)}")
    background = _background(spec.width, spec.height, rng)

    drop = None
    if spec.joint_dropout > 0:
        drop = rng.random((spec.n_frames, spec.n_persons, pose.N_JOINTS)) < spec.joint_dropout

    frames, poses = [], []
    for t in range(spec.n_frames):
        img = background.copy()
        pf = PoseFrame(t)
        for pi, motion in enumerate(motions):
            joints = skeleton_at(motion, t)
            color = np.array([motion.shade, motion.shade * 1.1, motion.shade * 1.35], dtype=np.float32)
            for a, b in _LIMBS:
                _draw_segment(img, joints[a], joints[b], color)
            _draw_disc(img, joints[pose.NOSE], 0.18 * motion.scale, color)
            kp = np.concatenate([joints, np.ones((pose.N_JOINTS, 1))], axis=1)
            if drop is not None:
                kp[drop[t, pi]] = 0.0
            pf.persons.append(kp)
            pf.person_hints.append(pi)
        frames.append(Frame(np.clip(img, 0.0, 1.0)))
        poses.append(pf)

    seq = FrameSequence(frames, fps=spec.fps, video_id=spec.video_id, date_tag=spec.date_tag)
    action = spec.action_name or ("rubbing_hands" if spec.class_label == 1 else OTHER_ACTIONS[0])
    record = AnnotationRecord(
        video_id=spec.video_id, date_tag=spec.date_tag, track_id=0,
        start_frame=0, end_frame=spec.n_frames, label=spec.class_label,
        action_name=action, synthetic=spec.synthetic,
    )
    return seq, poses, record


def wrist_distance_series(poses: list[PoseFrame], person: int = 0) -> np.ndarray:
    """Distance between the two wrists over time; the rubbing oscillation oracle."""
    out = []
    for pf in poses:
        p = pf.persons[person]
        out.append(np.hypot(*(p[pose.R_WRIST, :2] - p[pose.L_WRIST, :2])))
    return np.array(out)


def mean_wrist_speed(poses: list[PoseFrame], person: int = 0) -> float:
    """Mean per-frame wrist displacement averaged over both wrists."""
    pts = np.array([[pf.persons[person][j, :2] for j in (pose.R_WRIST, pose.L_WRIST)] for pf in poses])
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=2)
    return float(steps.mean())


@dataclass
class DatasetConfig:
    seed: int = 7
    out_dir: str = "dataset"
    n_rubbing: int = 10
    n_other: int = 10
    n_synthetic_rubbing: int = 0
    n_dates: int = 4
    n_synthetic_dates: int = 2
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    n_frames_min: int = 32
    n_frames_max: int = 48
    rubbing_total_frames: int | None = None
    other_total_frames: int | None = None
    synthetic_total_frames: int | None = None
    n_persons: int = 1
    joint_dropout: float = 0.0
    fps: float = 15.0

    def __post_init__(self):
        if min(self.n_rubbing, self.n_other, self.n_synthetic_rubbing) < 0:
            raise ConfigError("scene counts must be non-negative")
        if self.n_dates < 1 or self.n_synthetic_dates < 1:
            raise ConfigError("date counts must be >= 1")
        if self.n_frames_min < 16 or self.n_frames_max < self.n_frames_min:
            raise ConfigError("need 16 <= n_frames_min <= n_frames_max")


def _length_plan(count: int, total: int | None, lo: int, hi: int, rng: np.random.Generator) -> list[int]:
    if count == 0:
        return []
    if total is None:
        return [int(v) for v in rng.integers(lo, hi + 1, size=count)]
    base, extra = divmod(total, count)
    lengths = [base + (1 if i < extra else 0) for i in range(count)]
    if min(lengths) < 16:
        raise ConfigError(f"cannot split {total} frames into {count} clips of >= 16 frames")
    return lengths


def generate_dataset(cfg: DatasetConfig) -> dict:
    """Write scenes plus a dataset.json manifest; returns the manifest dict."""
    rng = np.random.default_rng(cfg.seed)
    groups = [
        ("rub", 1, False, cfg.n_rubbing, cfg.rubbing_total_frames),
        ("oth", 0, False, cfg.n_other, cfg.other_total_frames),
        ("synrub", 1, True, cfg.n_synthetic_rubbing, cfg.synthetic_total_frames),
    ]
    entries = []
    scene_seeds = rng.integers(0, 2**62, size=sum(g[3] for g in groups))
    seed_iter = iter(int(s) for s in scene_seeds)
    os.makedirs(cfg.out_dir, exist_ok=True)

    for prefix, label, synthetic, count, total in groups:
        lengths = _length_plan(count, total, cfg.n_frames_min, cfg.n_frames_max, rng)
        for i in range(count):
            if synthetic:
                date = f"s{i % cfg.n_synthetic_dates:02d}"
            else:
                date = f"d{i % cfg.n_dates:02d}"
            video_id = f"{prefix}_{i:03d}"
            action = "rubbing_hands" if label == 1 else OTHER_ACTIONS[i % len(OTHER_ACTIONS)]
            spec = SceneSpec(
                seed=next(seed_iter), class_label=label, n_persons=cfg.n_persons,
                n_frames=lengths[i], width=cfg.width, height=cfg.height, fps=cfg.fps,
                video_id=video_id, date_tag=date, action_name=action,
                synthetic=synthetic, joint_dropout=cfg.joint_dropout,
            )
            seq, poses, record = generate_scene(spec)
            frames_dir = os.path.join("scenes", video_id, "frames")
            keypoints_file = os.path.join("scenes", video_id, "keypoints.txt")
            frameio.save_sequence(seq, os.path.join(cfg.out_dir, frames_dir))
            pose.save_poses(poses, os.path.join(cfg.out_dir, keypoints_file))
            entries.append({
                "video_id": video_id,
                "date_tag": date,
                "class": label,
                "frames_dir": frames_dir,
                "keypoints_file": keypoints_file,
                "start_frame": 0,
                "end_frame": lengths[i],
                "action_name": record.action_name,
                "synthetic": synthetic,
            })

    manifest = {"seed": cfg.seed, "scenes": entries}
    with open(os.path.join(cfg.out_dir, "dataset.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def load_manifest(dataset_dir: str) -> dict:
    path = os.path.join(dataset_dir, "dataset.json")
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{dataset_dir}: missing dataset.json manifest")
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}")


def manifest_records(manifest: dict) -> list[AnnotationRecord]:
    """Annotation records straight from the manifest (track ids unresolved)."""
    return [
        AnnotationRecord(
            video_id=e["video_id"], date_tag=e["date_tag"], track_id=-1,
            start_frame=e["start_frame"], end_frame=e["end_frame"], label=e["class"],
            action_name=e.get("action_name", ""), synthetic=e.get("synthetic", False),
        )
        for e in manifest["scenes"]
    ]
