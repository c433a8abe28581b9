"""Monte-Carlo pseudo-analog transmission chain and its end-to-end run.

Transmit side: 3-D DCT, block and sort by variance, keep the K
largest-variance blocks (one per flight slot, in variance order), scale
block k by sqrt(p_k / lambda_k) so its mean transmit power is exactly
p_k, whiten, and send through the slot's scalar channel with additive
Gaussian noise. Receive side: zero-forcing or linear least-squares
demodulation, dewhitening, inverse placement with discarded blocks as
zeros, inverse DCT.

Zero-forcing reconstruction error per coefficient is noise / (gain *
scale), independent of the signal, so the empirical MSE converges to the
analytic noise term plus the exact truncation loss; the linear
least-squares demodulator shrinks toward zero and can only do better.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import quality
from ..kinematics import PowerAllocation, Trajectory
from ..rng import NOISE, stream
from ..scenario import GroundUser, Scenario
from .transform import (
    CoefficientBlock,
    Gop,
    Whitener,
    blockize_and_sort,
    dct3_forward,
    dct3_inverse,
    reassemble,
)

__all__ = [
    "ZERO_FORCING",
    "LLSE",
    "ScaledBlocks",
    "select_and_scale",
    "transmit",
    "decode",
    "EndToEndResult",
    "end_to_end",
]

ZERO_FORCING = "zero_forcing"
LLSE = "llse"


@dataclass(frozen=True)
class ScaledBlocks:
    """Power-scaled transmit signals for the kept blocks."""

    signals: np.ndarray  # (kept, N_p)
    scales: np.ndarray  # (kept,)
    kept: list[CoefficientBlock]
    discarded: list[CoefficientBlock]

    def truncation_loss(self) -> float:
        """Sum of squares of every discarded coefficient."""
        return float(sum(np.sum(b.coefficients**2) for b in self.discarded))


def select_and_scale(
    blocks: list[CoefficientBlock], kept: int, power: PowerAllocation
) -> ScaledBlocks:
    """Keep the ``kept`` largest-variance blocks and scale block k to power p_k.

    Blocks with zero variance carry no signal and are transmitted as zeros.
    """
    if kept > len(blocks):
        raise ValueError(f"cannot keep {kept} of {len(blocks)} blocks")
    if power.slots != kept:
        raise ValueError(f"power allocation has {power.slots} slots, expected {kept}")
    head, tail = blocks[:kept], blocks[kept:]
    scales = np.array(
        [np.sqrt(p / b.variance) if b.variance > 0.0 else 0.0 for p, b in zip(power.p, head)]
    )
    signals = scales[:, None] * np.array([b.coefficients for b in head])
    return ScaledBlocks(signals=signals, scales=scales, kept=head, discarded=tail)


def transmit(
    signals: np.ndarray, gains: np.ndarray, noise_power: float, rng: np.random.Generator
) -> np.ndarray:
    """Per-slot scalar channel: gain * signal + Gaussian noise."""
    gains = np.broadcast_to(np.asarray(gains, dtype=float), (signals.shape[0],))
    if np.any(gains <= 0.0):
        raise ValueError("channel gains must be positive")
    noise = rng.normal(scale=np.sqrt(noise_power), size=signals.shape) if noise_power > 0.0 else 0.0
    return gains[:, None] * signals + noise


def decode(
    received: np.ndarray,
    gains: np.ndarray,
    scales: np.ndarray,
    mode: str,
    variances: np.ndarray,
    noise_power: float,
) -> np.ndarray:
    """Demodulate per-slot signals back to coefficient estimates.

    zero_forcing inverts the known gain chain; llse applies the linear
    minimum-MSE shrinkage using the block variance. Zero-variance blocks
    decode to zeros in both modes.
    """
    gains = np.broadcast_to(np.asarray(gains, dtype=float), (received.shape[0],))
    chain = gains * scales
    out = np.zeros_like(received)
    live = scales > 0.0
    if mode == ZERO_FORCING:
        if np.any(gains[live] * scales[live] <= 0.0):
            raise ValueError("zero-forcing needs a positive gain chain")
        out[live] = received[live] / chain[live, None]
    elif mode == LLSE:
        lam = np.asarray(variances, dtype=float)
        num = chain[live] * lam[live]
        den = chain[live] ** 2 * lam[live] + noise_power
        out[live] = (num / den)[:, None] * received[live]
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return out


@dataclass(frozen=True)
class EndToEndResult:
    empirical_mse: float
    empirical_psnr_db: float
    analytic_mse: float
    analytic_psnr_db: float
    trials: int
    reconstructed: Gop


def end_to_end(
    gop: Gop,
    scenario: Scenario,
    traj: Trajectory,
    power: PowerAllocation,
    user: GroundUser,
    seed: int,
    mode: str = ZERO_FORCING,
    block_shape: tuple[int, int] = (18, 22),
    trials: int = 1,
    whitener: Whitener | None = None,
) -> EndToEndResult:
    """Run the full chain for one user and compare against the analytic model.

    The empirical MSE averages ``trials`` independent noise realizations
    (seeds derived per trial); the reconstruction is kept from the last
    trial. The analytic reference evaluates the scenario's distortion
    model, so the scenario spectrum should describe this same GOP.
    """
    bh, bw = block_shape
    if bh * bw != scenario.coeffs_per_block:
        raise ValueError(
            f"block shape {block_shape} has {bh * bw} coefficients, "
            f"scenario expects {scenario.coeffs_per_block}"
        )
    coeffs = dct3_forward(gop.frames)
    blocks = blockize_and_sort(coeffs, block_shape)
    scaled = select_and_scale(blocks, scenario.slots, power)
    if whitener is None:
        whitener = Whitener(scenario.coeffs_per_block, seed)
    white = (whitener.matrix @ scaled.signals.T).T

    h_sq = scenario.channel.beta0 / quality.slot_distances_sq(traj, user.position) ** (
        scenario.channel.alpha / 2.0
    )
    gains = np.sqrt(h_sq)
    lam = np.array([b.variance for b in scaled.kept])
    noise_power = scenario.channel.noise_power

    n_pixels = gop.frames.size
    total_sq_err = 0.0
    recon = None
    for trial in range(trials):
        rng = stream(seed, NOISE, trial)
        received = transmit(white, gains, noise_power, rng)
        est_white = decode(received, gains, scaled.scales, mode, lam, noise_power)
        estimates = (whitener.matrix.T @ est_white.T).T
        rebuilt = reassemble(
            scaled.kept, list(estimates), gop.frames.shape, block_shape
        )
        frames = dct3_inverse(rebuilt)
        total_sq_err += float(np.sum((frames - gop.frames) ** 2))
        recon = frames

    empirical_mse = total_sq_err / (trials * n_pixels)
    analytic_mse = quality.mse(scenario, traj, power, user)
    return EndToEndResult(
        empirical_mse=empirical_mse,
        empirical_psnr_db=quality.psnr_from_mse(empirical_mse, scenario.pixel_peak),
        analytic_mse=analytic_mse,
        analytic_psnr_db=quality.psnr_from_mse(analytic_mse, scenario.pixel_peak),
        trials=trials,
        reconstructed=Gop(
            frames=np.clip(recon, 0.0, gop.pixel_peak), pixel_peak=gop.pixel_peak
        ),
    )
