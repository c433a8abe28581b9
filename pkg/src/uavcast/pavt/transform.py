"""Transforms of the pseudo-analog codec: 3-D DCT, blocking, whitening.

A group of pictures is transformed with an orthonormal separable DCT-II
over both spatial axes and the temporal axis, then each temporal plane of
the coefficient volume is cut into uniform blocks. Blocks are ranked by
their mean-square value (the zero-mean variance model), descending, which
fixes the transmission order. Whitening spreads each block's energy
evenly across its coefficients before modulation: a normalized Hadamard
matrix when the block length is a power of two, otherwise a seeded random
orthogonal matrix; either way the transform is orthonormal, which is all
the distortion accounting relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn
from scipy.linalg import hadamard

from ..rng import WHITEN, stream

__all__ = [
    "Gop",
    "CoefficientBlock",
    "dct3_forward",
    "dct3_inverse",
    "blockize_and_sort",
    "reassemble",
    "Whitener",
]


@dataclass(frozen=True)
class Gop:
    """A group of pictures: frames shaped (T, H, W), values in [0, peak]."""

    frames: np.ndarray
    pixel_peak: float = 255.0

    def __post_init__(self):
        arr = np.array(self.frames, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"frames must be (T, H, W), got shape {arr.shape}")
        if arr.min() < 0.0 or arr.max() > self.pixel_peak:
            raise ValueError("pixel values outside [0, peak]")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames.shape


@dataclass(frozen=True)
class CoefficientBlock:
    """One block of DCT coefficients plus the metadata to place it back."""

    coefficients: np.ndarray  # (N_p,)
    variance: float  # mean square of the coefficients (zero-mean model)
    index: int  # raster index: plane-major, then block row, then block column
    plane: int
    row: int  # block-grid row within the plane
    col: int  # block-grid column within the plane


def dct3_forward(frames: np.ndarray) -> np.ndarray:
    """Orthonormal 3-D DCT-II of a (T, H, W) volume."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3:
        raise ValueError(f"expected a 3-D volume, got shape {frames.shape}")
    return dctn(frames, type=2, norm="ortho")


def dct3_inverse(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct3_forward`."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 3:
        raise ValueError(f"expected a 3-D volume, got shape {coeffs.shape}")
    return idctn(coeffs, type=2, norm="ortho")


def blockize_and_sort(
    coeffs: np.ndarray, block_shape: tuple[int, int]
) -> list[CoefficientBlock]:
    """Cut each temporal plane into blocks and sort by variance, descending.

    Ties keep raster order, so an all-zero input yields a stable sequence.
    """
    t, h, w = coeffs.shape
    bh, bw = block_shape
    if h % bh or w % bw:
        raise ValueError(f"frame {h}x{w} not divisible into {bh}x{bw} blocks")
    grid_h, grid_w = h // bh, w // bw

    blocks = []
    index = 0
    for plane in range(t):
        for row in range(grid_h):
            for col in range(grid_w):
                chunk = coeffs[plane, row * bh : (row + 1) * bh, col * bw : (col + 1) * bw]
                flat = chunk.ravel().copy()
                blocks.append(
                    CoefficientBlock(
                        coefficients=flat,
                        variance=float(np.mean(flat**2)),
                        index=index,
                        plane=plane,
                        row=row,
                        col=col,
                    )
                )
                index += 1
    blocks.sort(key=lambda b: (-b.variance, b.index))
    return blocks


def reassemble(
    blocks: list[CoefficientBlock],
    estimates: list[np.ndarray],
    shape: tuple[int, int, int],
    block_shape: tuple[int, int],
) -> np.ndarray:
    """Place per-block estimates back into a coefficient volume.

    Blocks without an estimate (discarded at the transmitter) stay zero.
    """
    bh, bw = block_shape
    out = np.zeros(shape)
    for block, est in zip(blocks, estimates):
        if est is None:
            continue
        out[
            block.plane,
            block.row * bh : (block.row + 1) * bh,
            block.col * bw : (block.col + 1) * bw,
        ] = np.asarray(est).reshape(bh, bw)
    return out


class Whitener:
    """Orthonormal energy-spreading transform for fixed-length blocks."""

    def __init__(self, length: int, seed: int = 0):
        self.length = length
        if length & (length - 1) == 0:
            self.matrix = hadamard(length).astype(float) / np.sqrt(length)
        else:
            # seeded orthogonal replacement when the length is not 2**m;
            # sign-fixed QR keeps it deterministic per seed
            rng = stream(seed, WHITEN)
            q, r = np.linalg.qr(rng.normal(size=(length, length)))
            q *= np.sign(np.diag(r))
            self.matrix = q.T

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return self.matrix.T @ y
