"""Dense optical flow via the duality-based TV-L1 solver.

Coarse-to-fine pyramid, five warps per level by default, primal-dual inner
iterations delegated to the selected kernel backend.  Luminance input is
rescaled to the 0..255 range internally so the default data weight keeps its
usual calibration against 8-bit gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend, frameio
from ._purekernels import _forward_grad
from .errors import ConfigError, DataError
from .frameio import Frame, FrameSequence

FLOW_CLIP = 20.0  # px; displacements are clipped here then mapped to [-1, 1]


@dataclass
class TvL1Params:
    lam: float = 0.15  # data attachment weight
    theta: float = 0.3  # coupling between data and smoothness variables
    tau: float = 0.25  # dual ascent step
    n_warps: int = 5
    n_iters: int = 25
    stop_epsilon: float = 0.01
    pyramid_factor: float = 0.5
    min_size: int = 16

    def __post_init__(self):
        if self.lam <= 0 or self.theta <= 0:
            raise ConfigError("lam and theta must be positive")
        if not 0 < self.tau <= 0.25:
            # the dual step loses its convergence guarantee past 0.25
            raise ConfigError(f"tau must lie in (0, 0.25], got {self.tau}")
        if self.n_warps < 1 or self.n_iters < 1:
            raise ConfigError("n_warps and n_iters must be >= 1")
        if not 0 < self.pyramid_factor < 1:
            raise ConfigError(f"pyramid_factor must lie in (0, 1), got {self.pyramid_factor}")
        if self.min_size < 8:
            raise ConfigError(f"min_size must be >= 8, got {self.min_size}")


@dataclass
class TvL1Result:
    flow: np.ndarray  # (h, w, 2) float32, channel 0 = dx, channel 1 = dy
    energies: list[float] = field(default_factory=list)  # per warp, finest level


def _resize2d(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    return frameio.resize_bilinear(Frame(img[:, :, None]), out_w, out_h).data[:, :, 0]


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(2.5 * sigma + 0.5))
    xs = np.arange(-radius, radius + 1, dtype=np.float32)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    k /= k.sum()
    pad = np.pad(img, ((0, 0), (radius, radius)), mode="edge")
    tmp = np.zeros_like(img)
    for i in range(k.size):
        tmp += k[i] * pad[:, i : i + img.shape[1]]
    pad = np.pad(tmp, ((radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for i in range(k.size):
        out += k[i] * pad[i : i + img.shape[0], :]
    return out


def _pyramid(img: np.ndarray, factor: float, min_size: int) -> list[np.ndarray]:
    """Finest level first; stops before either side would fall under min_size."""
    sigma = 0.6 * np.sqrt(1.0 / factor**2 - 1.0)
    levels = [img]
    while True:
        h, w = levels[-1].shape
        nh, nw = int(round(h * factor)), int(round(w * factor))
        if min(nh, nw) < min_size:
            return levels
        levels.append(_resize2d(_gaussian_blur(levels[-1], sigma), nw, nh))


def _centered_gradient(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    gx[:, 0] = 0.5 * (img[:, 1] - img[:, 0])
    gx[:, -1] = 0.5 * (img[:, -1] - img[:, -2])
    gy[1:-1, :] = 0.5 * (img[2:, :] - img[:-2, :])
    gy[0, :] = 0.5 * (img[1, :] - img[0, :])
    gy[-1, :] = 0.5 * (img[-1, :] - img[-2, :])
    return gx, gy


def flow_energy(rho_c: np.ndarray, I1wx: np.ndarray, I1wy: np.ndarray,
                u1: np.ndarray, u2: np.ndarray, lam: float) -> float:
    """Objective under the current linearization: lam * data residual + TV."""
    rho = rho_c + I1wx * u1 + I1wy * u2
    u1x, u1y = _forward_grad(u1)
    u2x, u2y = _forward_grad(u2)
    tv = np.sqrt(u1x**2 + u1y**2).sum() + np.sqrt(u2x**2 + u2y**2).sum()
    return float(lam * np.abs(rho).sum() + tv)


def _as_plane(img) -> np.ndarray:
    """Accept a Frame (RGB converted by luminance) or a bare (h, w) plane."""
    if isinstance(img, Frame):
        return frameio.luminance(img)
    return np.asarray(img)


def tvl1_flow(img0, img1, params: TvL1Params | None = None) -> TvL1Result:
    """Flow from img0 to img1; luminance planes (or Frames) in [0, 1]."""
    params = params or TvL1Params()
    img0 = _as_plane(img0)
    img1 = _as_plane(img1)
    if img0.ndim != 2 or img0.shape != img1.shape:
        raise DataError(f"flow inputs must be equal-shaped 2d arrays, "
                        f"got {img0.shape} and {img1.shape}")
    if min(img0.shape) < params.min_size:
        raise DataError(f"flow input {img0.shape} is smaller than min_size {params.min_size}")
    I0 = np.ascontiguousarray(img0, dtype=np.float32) * np.float32(255.0)
    I1 = np.ascontiguousarray(img1, dtype=np.float32) * np.float32(255.0)

    pyr0 = _pyramid(I0, params.pyramid_factor, params.min_size)
    pyr1 = _pyramid(I1, params.pyramid_factor, params.min_size)
    stop_eps2 = params.stop_epsilon**2

    h, w = pyr0[-1].shape
    u1 = np.zeros((h, w), dtype=np.float32)
    u2 = np.zeros((h, w), dtype=np.float32)
    energies: list[float] = []

    for level in range(len(pyr0) - 1, -1, -1):
        I0l, I1l = pyr0[level], pyr1[level]
        I1x, I1y = _centered_gradient(I1l)
        shape = I0l.shape
        p11, p12, p21, p22 = (np.zeros(shape, dtype=np.float32) for _ in range(4))
        for _ in range(params.n_warps):
            I1w = backend.warp_bilinear(I1l, u1, u2)
            I1wx = backend.warp_bilinear(I1x, u1, u2)
            I1wy = backend.warp_bilinear(I1y, u1, u2)
            grad = I1wx * I1wx + I1wy * I1wy
            rho_c = I1w - I1wx * u1 - I1wy * u2 - I0l
            u1, u2, p11, p12, p21, p22, _ = backend.tvl1_iterations(
                I1wx, I1wy, rho_c, grad, u1, u2, p11, p12, p21, p22,
                params.lam, params.theta, params.tau, params.n_iters, stop_eps2,
            )
            if level == 0:
                energies.append(flow_energy(rho_c, I1wx, I1wy, u1, u2, params.lam))
        if level > 0:
            nh, nw = pyr0[level - 1].shape
            u1 = _resize2d(u1, nw, nh) * np.float32(nw / shape[1])
            u2 = _resize2d(u2, nw, nh) * np.float32(nh / shape[0])

    flow = np.stack([u1, u2], axis=-1)
    return TvL1Result(flow=flow, energies=energies)


def flow_to_frame(flow: np.ndarray, clip: float = FLOW_CLIP) -> Frame:
    """Clip displacements to +-clip px and rescale to [-1, 1]."""
    scaled = np.clip(flow, -clip, clip) / np.float32(clip)
    return Frame(scaled.astype(np.float32))


def flow_sequence(seq: FrameSequence, params: TvL1Params | None = None,
                  clip: float = FLOW_CLIP) -> FrameSequence:
    """Pairwise flow over a sequence, n frames in and n frames out.

    Only n - 1 pairs exist, so the last flow frame is repeated once; that keeps
    flow windows aligned start-for-start with the RGB windows they shadow.
    """
    if len(seq.frames) < 2:
        raise DataError(f"{seq.video_id}: need at least 2 frames for flow, got {len(seq.frames)}")
    params = params or TvL1Params()
    grays = [frameio.luminance(f) for f in seq.frames]
    out = [flow_to_frame(tvl1_flow(grays[i], grays[i + 1], params).flow, clip)
           for i in range(len(grays) - 1)]
    out.append(Frame(out[-1].data.copy()))
    return FrameSequence(out, fps=seq.fps, video_id=seq.video_id, date_tag=seq.date_tag)
