"""Codec-free frame storage and elementary image operations.

Frames live in memory as float32 arrays of shape (height, width, channels)
with RGB values in [0, 1].  Two-channel frames hold optical flow (dx, dy)
and are exempt from the range bound.  On disk, RGB goes to binary PPM (P6,
8-bit), grayscale to PGM (P5) and flow to a little-endian float32 planar
format (".flo2").
"""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

FLO2_MAGIC = b"FLO2"

_FRAME_RE = re.compile(r"^frame_(\d{6})\.(ppm|pgm|flo2)$")


@dataclass
class Frame:
    """One image: float32 (h, w, c) with c in {1, 2, 3}."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3 or self.data.shape[2] not in (1, 2, 3):
            raise DataError(f"frame data must be (h, w, c) with 1|2|3 channels, got {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def is_flow(self) -> bool:
        return self.channels == 2


@dataclass
class FrameSequence:
    """Ordered frames plus recording metadata."""

    frames: list[Frame] = field(default_factory=list)
    fps: float = 15.0
    video_id: str = ""
    date_tag: str = ""

    def __post_init__(self):
        if self.fps <= 0:
            raise DataError(f"fps must be positive, got {self.fps}")
        if self.frames:
            w, h, c = self.frames[0].width, self.frames[0].height, self.frames[0].channels
            for i, f in enumerate(self.frames):
                if (f.width, f.height, f.channels) != (w, h, c):
                    raise DataError(f"frame {i} dimensions {f.width}x{f.height}x{f.channels} != {w}x{h}x{c}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def channels(self) -> int:
        return self.frames[0].channels


def _ext_for_channels(channels: int) -> str:
    return {1: "pgm", 2: "flo2", 3: "ppm"}[channels]


def write_ppm(frame: Frame, path: str) -> None:
    """8-bit binary PPM (P6) for RGB, PGM (P5) for grayscale."""
    q = np.clip(np.rint(frame.data * 255.0), 0, 255).astype(np.uint8)
    magic = b"P6" if frame.channels == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (frame.width, frame.height))
        fh.write(q.tobytes())


def read_ppm(path: str) -> Frame:
    with open(path, "rb") as fh:
        raw = fh.read()
    m = re.match(rb"^(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise DataError(f"{path}: not a binary PPM/PGM file")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit images supported, maxval={maxval}")
    c = 3 if magic == b"P6" else 1
    pixels = np.frombuffer(raw[m.end():], dtype=np.uint8, count=w * h * c)
    if pixels.size != w * h * c:
        raise DataError(f"{path}: truncated pixel data")
    return Frame(pixels.reshape(h, w, c).astype(np.float32) / 255.0)


def write_flo2(frame: Frame, path: str) -> None:
    """Planar little-endian float32 flow file: dx plane then dy plane."""
    if frame.channels != 2:
        raise DataError(f"{path}: .flo2 requires a 2-channel frame, got {frame.channels}")
    with open(path, "wb") as fh:
        fh.write(FLO2_MAGIC)
        fh.write(struct.pack("<II", frame.width, frame.height))
        fh.write(frame.data[:, :, 0].astype("<f4").tobytes())
        fh.write(frame.data[:, :, 1].astype("<f4").tobytes())


def read_flo2(path: str) -> Frame:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != FLO2_MAGIC:
        raise DataError(f"{path}: bad magic, not a .flo2 file")
    w, h = struct.unpack("<II", raw[4:12])
    planes = np.frombuffer(raw[12:], dtype="<f4", count=2 * w * h)
    if planes.size != 2 * w * h:
        raise DataError(f"{path}: truncated flow data")
    dx = planes[: w * h].reshape(h, w)
    dy = planes[w * h:].reshape(h, w)
    return Frame(np.stack([dx, dy], axis=-1))


def save_sequence(seq: FrameSequence, directory: str) -> None:
    """Write meta.json plus contiguously numbered frame files."""
    try:
        os.makedirs(directory, exist_ok=True)
        channels = seq.channels if len(seq) else 3
        meta = {
            "width": seq.width if len(seq) else 0,
            "height": seq.height if len(seq) else 0,
            "fps": seq.fps,
            "video_id": seq.video_id,
            "date_tag": seq.date_tag,
            "channels": channels,
        }
        with open(os.path.join(directory, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1)
        ext = _ext_for_channels(channels)
        for i, frame in enumerate(seq.frames):
            path = os.path.join(directory, f"frame_{i:06d}.{ext}")
            if ext == "flo2":
                write_flo2(frame, path)
            else:
                write_ppm(frame, path)
    except OSError as exc:
        raise DataError(f"cannot write sequence to {directory}: {exc}") from exc


def load_sequence(directory: str) -> FrameSequence:
    """Load a frame directory, enforcing contiguous numbering and the descriptor dims."""
    meta_path = os.path.join(directory, "meta.json")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{directory}: missing meta.json descriptor")
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON: {exc}")

    indices = {}
    for name in os.listdir(directory):
        m = _FRAME_RE.match(name)
        if m:
            indices[int(m.group(1))] = name
    if not indices:
        raise DataError(f"{directory}: no frames")
    for i in range(len(indices)):
        if i not in indices:
            raise DataError(f"{directory}: missing frame {i}")

    channels = int(meta["channels"])
    frames = []
    for i in range(len(indices)):
        path = os.path.join(directory, indices[i])
        frame = read_flo2(path) if channels == 2 else read_ppm(path)
        if (frame.width, frame.height, frame.channels) != (meta["width"], meta["height"], channels):
            raise DataError(
                f"{indices[i]}: dimensions {frame.width}x{frame.height}x{frame.channels} "
                f"do not match descriptor {meta['width']}x{meta['height']}x{channels}"
            )
        frames.append(frame)
    return FrameSequence(frames, fps=float(meta["fps"]), video_id=meta["video_id"], date_tag=meta["date_tag"])


def crop(frame: Frame, box) -> Frame:
    """Copy the intersection of `box` (BBox or (x1, y1, x2, y2)) with the frame."""
    x1, y1, x2, y2 = (box.x1, box.y1, box.x2, box.y2) if hasattr(box, "x1") else box
    ix1 = max(0, int(np.floor(x1 + 0.5)))
    iy1 = max(0, int(np.floor(y1 + 0.5)))
    ix2 = min(frame.width, int(np.floor(x2 + 0.5)))
    iy2 = min(frame.height, int(np.floor(y2 + 0.5)))
    if ix2 <= ix1 or iy2 <= iy1:
        raise DataError(f"crop box ({x1}, {y1}, {x2}, {y2}) has zero-area intersection with "
                        f"{frame.width}x{frame.height} frame")
    return Frame(frame.data[iy1:iy2, ix1:ix2].copy())


def _sample_coords(n_out: int, n_in: int) -> np.ndarray:
    # corner-aligned sampling; a single output sample maps to the input center
    if n_out == 1 or n_in == 1:
        return np.full(n_out, (n_in - 1) / 2.0)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(frame: Frame, out_w: int, out_h: int) -> Frame:
    """Bilinear resize with corner-aligned sampling."""
    if out_w < 1 or out_h < 1:
        raise DataError(f"resize target must be at least 1x1, got {out_w}x{out_h}")
    xs = _sample_coords(out_w, frame.width)
    ys = _sample_coords(out_h, frame.height)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, frame.width - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, frame.height - 1)
    x1 = np.minimum(x0 + 1, frame.width - 1)
    y1 = np.minimum(y0 + 1, frame.height - 1)
    fx = (xs - x0).astype(np.float32)[None, :, None]
    fy = (ys - y0).astype(np.float32)[:, None, None]
    d = frame.data
    top = d[y0[:, None], x0[None, :]] * (1 - fx) + d[y0[:, None], x1[None, :]] * fx
    bot = d[y1[:, None], x0[None, :]] * (1 - fx) + d[y1[:, None], x1[None, :]] * fx
    return Frame(top * (1 - fy) + bot * fy)


def hflip(frame: Frame) -> Frame:
    """Reverse columns; flow frames also get their horizontal component negated."""
    out = frame.data[:, ::-1].copy()
    if frame.is_flow:
        out[:, :, 0] = -out[:, :, 0]
    return Frame(out)


def adjust_brightness(frame: Frame, delta: float) -> Frame:
    """Add `delta` to every channel and clamp to [0, 1].  RGB frames only."""
    if frame.channels != 3:
        raise DataError(f"brightness adjustment requires an RGB frame, got {frame.channels} channels")
    return Frame(np.clip(frame.data + np.float32(delta), 0.0, 1.0))


def luminance(frame: Frame) -> np.ndarray:
    """Grayscale plane (h, w) via Rec.601 weights; identity for 1-channel frames."""
    if frame.channels == 1:
        return frame.data[:, :, 0]
    if frame.channels != 3:
        raise DataError("luminance needs an RGB or grayscale frame")
    r, g, b = frame.data[:, :, 0], frame.data[:, :, 1], frame.data[:, :, 2]
    return 0.299 * r + 0.587 * g + 0.114 * b
