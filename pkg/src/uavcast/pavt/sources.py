"""Video sources: deterministic synthetic GOPs and a raw-file loader.

Synthetic GOPs mix a dim smooth gradient, rectangles moving across
frames, a seeded bank of drifting sinusoids, and pixel noise. The
sinusoid bank matters: it spreads energy over many coefficient blocks so
the variance spectrum decays gradually instead of collapsing into the DC
block, keeping mid-order blocks relevant the way textured footage does.
Real sequences can be substituted through :func:`load_raw_video`, which
reads planar 8-bit grayscale frames.
"""

from __future__ import annotations

import numpy as np

from ..rng import SOURCE, stream
from .transform import Gop

__all__ = ["synthetic_gop", "load_raw_video"]


def synthetic_gop(
    seed: int,
    n_frames: int = 3,
    height: int = 144,
    width: int = 176,
    pixel_peak: float = 255.0,
) -> Gop:
    """Deterministic test footage shaped (n_frames, height, width)."""
    rng = stream(seed, SOURCE)
    yy, xx = np.mgrid[0:height, 0:width]
    base = 0.045 * pixel_peak * (xx / width + yy / height)

    n_waves = 110
    wave_fx = rng.uniform(0.005, 0.30, n_waves)
    wave_fy = rng.uniform(0.005, 0.30, n_waves)
    wave_amp = 0.085 * pixel_peak * rng.uniform(0.25, 1.0, n_waves)
    wave_phase = rng.uniform(0.0, 2.0 * np.pi, n_waves)
    wave_drift = rng.uniform(-0.5, 0.5, n_waves)

    rects = [
        (height // 4, width // 4, 0.30 * pixel_peak),
        (height // 6, width // 3, 0.22 * pixel_peak),
        (height // 3, width // 8, 0.26 * pixel_peak),
    ]
    frames = np.empty((n_frames, height, width))
    for t in range(n_frames):
        frame = base.copy()
        for i, (rect_h, rect_w, amp) in enumerate(rects):
            top = int((height - rect_h) * ((t + 1 + 2 * i) % (n_frames + 2)) / (n_frames + 2))
            left = int((width - rect_w) * ((t + 1 + 3 * i) % (n_frames + 2)) / (n_frames + 2))
            frame[top : top + rect_h, left : left + rect_w] += amp
        for i in range(n_waves):
            frame += wave_amp[i] * np.sin(
                2.0 * np.pi * (wave_fx[i] * xx + wave_fy[i] * yy + wave_phase[i] + wave_drift[i] * t)
            )
        frame += rng.normal(scale=0.05 * pixel_peak, size=frame.shape)
        frames[t] = frame
    return Gop(frames=np.clip(frames, 0.0, pixel_peak), pixel_peak=pixel_peak)


def load_raw_video(
    path,
    width: int,
    height: int,
    frame_indices: list[int] | None = None,
    pixel_peak: float = 255.0,
) -> Gop:
    """Read planar 8-bit grayscale frames from a raw file."""
    data = np.fromfile(path, dtype=np.uint8)
    frame_size = width * height
    if data.size % frame_size:
        raise ValueError(
            f"{path}: {data.size} bytes is not a whole number of {width}x{height} frames"
        )
    frames = data.reshape(-1, height, width).astype(float)
    if frame_indices is not None:
        try:
            frames = frames[frame_indices]
        except IndexError:
            raise ValueError(
                f"{path}: frame index out of range (file has {frames.shape[0]} frames)"
            ) from None
    return Gop(frames=frames, pixel_peak=pixel_peak)
