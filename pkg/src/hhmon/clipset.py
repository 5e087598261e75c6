"""Fixed-length clip sampling, augmentation and dataset splitting.

A sample is a 16-frame window cropped to one person's smoothed ROI.  The
crop box is frozen at the window's start frame for all 16 frames so the
crop itself adds no apparent motion.  Augmentation draws are a pure
function of (seed, provenance), which keeps RGB and flow samples of the
same window geometrically in lockstep.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import frameio
from .errors import DataError
from .frameio import Frame, FrameSequence
from .pose import BBox
from .tracking import Track

CLIP_LEN = 16


@dataclass
class AnnotationRecord:
    video_id: str
    date_tag: str
    track_id: int
    start_frame: int
    end_frame: int  # exclusive
    label: int
    action_name: str = ""
    synthetic: bool = False

    def __post_init__(self):
        if self.end_frame - self.start_frame < 1:
            raise DataError(f"{self.video_id}: annotation must span at least one frame")
        if self.label not in (0, 1):
            raise DataError(f"{self.video_id}: label must be 0 or 1, got {self.label}")

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame


@dataclass
class ClipSample:
    tensor: np.ndarray  # (16, H, W, C), C = 3 for RGB or 2 for flow
    label: int
    provenance: tuple[str, str, int]  # (video_id, date_tag, start_frame)

    def __post_init__(self):
        t, h, w, _ = self.tensor.shape
        if t != CLIP_LEN:
            raise DataError(f"clip must have exactly {CLIP_LEN} frames, got {t}")
        if h != w:
            raise DataError(f"clip must be square, got {h}x{w}")
        if self.label not in (0, 1):
            raise DataError(f"clip label must be 0 or 1, got {self.label}")


@dataclass
class AugmentConfig:
    scale_min: float = 1.0
    scale_max: float = 1.75
    flip_prob: float = 0.5
    brightness_extent: float = 0.1
    input_size: int = 56
    pos_stride: int = 1
    neg_stride: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 1.0 <= self.scale_min <= self.scale_max:
            raise DataError(f"need 1 <= scale_min <= scale_max, got {self.scale_min}, {self.scale_max}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise DataError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")


def window_starts(clip_len: int, label: int, cfg: AugmentConfig = AugmentConfig()) -> list[int]:
    """All 16-frame window starts for a clip: every frame for positives,
    a fixed stride for negatives.  Clips shorter than 16 frames yield none."""
    if clip_len < CLIP_LEN:
        return []
    stride = cfg.pos_stride if label == 1 else cfg.neg_stride
    return list(range(0, clip_len - CLIP_LEN + 1, stride))


def sample_rng(cfg: AugmentConfig, provenance: tuple[str, str, int]) -> np.random.Generator:
    """Per-sample RNG stream keyed by provenance; identical for RGB and flow."""
    video_id, date_tag, start = provenance
    digest = hashlib.sha256(f"{video_id}|{date_tag}|{start}".encode()).digest()
    return np.random.default_rng([cfg.seed, int.from_bytes(digest[:8], "little")])


def _fit_to_input(frame: Frame, size: int) -> Frame:
    """Scale the shorter side to `size`, then center-crop to size x size."""
    scale = size / min(frame.width, frame.height)
    new_w = max(size, int(round(frame.width * scale)))
    new_h = max(size, int(round(frame.height * scale)))
    resized = frameio.resize_bilinear(frame, new_w, new_h)
    x0 = (new_w - size) // 2
    y0 = (new_h - size) // 2
    return Frame(resized.data[y0:y0 + size, x0:x0 + size].copy())


def sample_clip(
    seq: FrameSequence,
    track: Track,
    start: int,
    cfg: AugmentConfig,
    mode: str = "eval",
    label: int = 0,
    rng: np.random.Generator | None = None,
) -> ClipSample:
    """Cut one 16-frame window around the track's smoothed box at `start`.

    Train mode applies per-clip multi-scale cropping (area factor in
    [scale_min, scale_max]), a coin-flip horizontal flip and one brightness
    delta shared by all 16 frames.  Eval mode is the deterministic
    original-ROI crop.
    """
    if mode not in ("train", "eval"):
        raise DataError(f"mode must be train or eval, got {mode}")
    if start + CLIP_LEN > len(seq):
        raise DataError(f"{seq.video_id}: window [{start}, {start + CLIP_LEN}) exceeds {len(seq)} frames")
    box = track.box_at(start, smoothed=True)
    if box is None:
        raise DataError(f"{seq.video_id}: track {track.track_id} has no box at frame {start}")

    provenance = (seq.video_id, seq.date_tag, start)
    if mode == "train":
        if rng is None:
            rng = sample_rng(cfg, provenance)
        area = rng.uniform(cfg.scale_min, cfg.scale_max)
        flip = rng.random() < cfg.flip_prob
        delta = rng.uniform(-cfg.brightness_extent, cfg.brightness_extent)
        box = box.scaled(float(np.sqrt(area)))
    else:
        flip, delta = False, 0.0

    planes = []
    for t in range(start, start + CLIP_LEN):
        frame = frameio.crop(seq.frames[t], box)
        frame = _fit_to_input(frame, cfg.input_size)
        if flip:
            frame = frameio.hflip(frame)
        if delta and frame.channels == 3:
            frame = frameio.adjust_brightness(frame, delta)
        planes.append(frame.data)
    return ClipSample(np.stack(planes), label=label, provenance=provenance)


def sample_still(
    seq: FrameSequence,
    track: Track,
    frame_index: int,
    cfg: AugmentConfig,
    mode: str = "train",
) -> np.ndarray:
    """One augmented (size, size, C) crop of a single frame, for 2D pretraining."""
    if not 0 <= frame_index < len(seq):
        raise DataError(f"{seq.video_id}: still frame {frame_index} outside 0..{len(seq) - 1}")
    box = track.box_at(frame_index, smoothed=True)
    if box is None:
        raise DataError(f"{seq.video_id}: track {track.track_id} has no box "
                        f"at frame {frame_index}")
    if mode == "train":
        rng = sample_rng(cfg, (seq.video_id, seq.date_tag, frame_index))
        box = box.scaled(float(np.sqrt(rng.uniform(cfg.scale_min, cfg.scale_max))))
        flip = rng.random() < cfg.flip_prob
        delta = rng.uniform(-cfg.brightness_extent, cfg.brightness_extent)
    else:
        flip, delta = False, 0.0
    frame = _fit_to_input(frameio.crop(seq.frames[frame_index], box), cfg.input_size)
    if flip:
        frame = frameio.hflip(frame)
    if delta and frame.channels == 3:
        frame = frameio.adjust_brightness(frame, delta)
    return frame.data


@dataclass
class SplitResult:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int = 0

    def as_dict(self) -> dict:
        return {"seed": self.seed, "train": self.train, "val": self.val, "test": self.test}


def split_dataset(
    records: list[AnnotationRecord],
    ratios: tuple[int, int, int] = (10, 1, 1),
    seed: int = 0,
) -> SplitResult:
    """Date-disjoint 10:1:1 split by per-class frame counts.

    Dates are greedily packed into the split whose per-class frame totals
    deviate least from the ratio targets.  Synthetic records (and any date
    containing one) are forced into the training split.
    """
    dates: dict[str, dict] = {}
    for i, rec in enumerate(records):
        d = dates.setdefault(rec.date_tag, {"ids": [], "frames": np.zeros(2), "synthetic": False})
        d["ids"].append(i)
        d["frames"][rec.label] += rec.n_frames
        d["synthetic"] |= rec.synthetic

    free_dates = [tag for tag, d in dates.items() if not d["synthetic"]]
    if len(free_dates) < 3:
        raise DataError(f"need at least 3 distinct non-synthetic date_tags to split, got {len(free_dates)}")

    totals = sum((dates[t]["frames"] for t in free_dates), np.zeros(2))
    weights = np.array(ratios, dtype=np.float64) / sum(ratios)
    targets = weights[:, None] * totals[None, :]  # (3 splits, 2 classes)

    rng = np.random.default_rng(seed)
    order = sorted(free_dates)
    rng.shuffle(order)
    order.sort(key=lambda t: -dates[t]["frames"].sum(), )

    assigned = np.zeros((3, 2))
    membership: list[list[str]] = [[], [], []]
    for tag in order:
        best, best_dev = 0, None
        for s in range(3):
            trial = assigned.copy()
            trial[s] += dates[tag]["frames"]
            dev = np.abs(trial - targets).sum()
            if best_dev is None or dev < best_dev - 1e-9:
                best, best_dev = s, dev
        assigned[best] += dates[tag]["frames"]
        membership[best].append(tag)

    # with >= 3 free dates no split may end up date-less; move the date whose
    # relocation costs the least deviation into each empty slot
    for s in (1, 2):
        while not membership[s]:
            best_move, best_dev = None, None
            for d in range(3):
                if len(membership[d]) < 2:
                    continue
                for tag in membership[d]:
                    trial = assigned.copy()
                    trial[d] -= dates[tag]["frames"]
                    trial[s] += dates[tag]["frames"]
                    dev = np.abs(trial - targets).sum()
                    if best_dev is None or dev < best_dev - 1e-9:
                        best_move, best_dev = (d, tag), dev
            d, tag = best_move
            membership[d].remove(tag)
            membership[s].append(tag)
            assigned[d] -= dates[tag]["frames"]
            assigned[s] += dates[tag]["frames"]

    split_of = {}
    for s, tags in enumerate(membership):
        for tag in tags:
            split_of[tag] = s
    for tag, d in dates.items():
        if d["synthetic"]:
            split_of[tag] = 0

    buckets: list[list[int]] = [[], [], []]
    for i, rec in enumerate(records):
        buckets[split_of[rec.date_tag]].append(i)
    return SplitResult(train=buckets[0], val=buckets[1], test=buckets[2], seed=seed)


def save_annotations(records: list[AnnotationRecord], path: str) -> None:
    """CSV lines: video_id,date_tag,track_id,start,end,label,action_name,synthetic."""
    with open(path, "w") as fh:
        for r in records:
            fh.write(f"{r.video_id},{r.date_tag},{r.track_id},{r.start_frame},{r.end_frame},"
                     f"{r.label},{r.action_name},{int(r.synthetic)}\n")


def load_annotations(path: str) -> list[AnnotationRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise DataError(f"{path}:{lineno}: expected 8 comma-separated fields, got {len(parts)}")
            records.append(AnnotationRecord(
                video_id=parts[0], date_tag=parts[1], track_id=int(parts[2]),
                start_frame=int(parts[3]), end_frame=int(parts[4]), label=int(parts[5]),
                action_name=parts[6], synthetic=bool(int(parts[7])),
            ))
    return records
