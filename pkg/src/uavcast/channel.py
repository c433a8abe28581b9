"""Line-of-sight air-to-ground channel model and dB/linear unit helpers.

The link from the UAV to a ground user is distance-driven: average power
gain ``beta0 / d**alpha`` with ``beta0`` referenced at 1 m. Shadowing and
small-scale fading are fixed at unit gain, so the squared instantaneous
gain equals the average gain. All internal math is linear-scale SI;
dB/dBm values are converted once at configuration load.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def dbm_to_watts(x_dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_w: float) -> float:
    """Convert a power level in watts to dBm."""
    if x_w <= 0.0:
        raise ValueError(f"power must be positive, got {x_w}")
    return 10.0 * np.log10(x_w) + 30.0


def db_to_linear(x_db: float) -> float:
    """Convert a dB ratio to a linear ratio."""
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    """Convert a linear ratio to dB."""
    if x <= 0.0:
        raise ValueError(f"ratio must be positive, got {x}")
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class ChannelParams:
    """Link-budget constants.

    beta0       linear power gain at the 1 m reference distance
    alpha       path-loss exponent (2 for pure free-space LoS)
    noise_power receiver noise power in watts
    """

    beta0: float
    alpha: float
    noise_power: float

    def __post_init__(self):
        if self.beta0 <= 0.0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if not 2.0 <= self.alpha <= 6.0:
            raise ValueError(f"alpha must be within [2, 6], got {self.alpha}")
        if self.noise_power <= 0.0:
            raise ValueError(f"noise_power must be positive, got {self.noise_power}")

    @classmethod
    def from_db(cls, beta0_db: float, alpha: float, noise_power_dbm: float) -> "ChannelParams":
        return cls(
            beta0=db_to_linear(beta0_db),
            alpha=alpha,
            noise_power=dbm_to_watts(noise_power_dbm),
        )


def distance(q, w) -> float:
    """Euclidean distance between a UAV position and a ground point, meters."""
    return float(np.linalg.norm(np.asarray(q, dtype=float) - np.asarray(w, dtype=float)))


def avg_gain(params: ChannelParams, q, w) -> float:
    """Average channel power gain beta0 / d**alpha at separation d = |q - w|."""
    d = distance(q, w)
    if d <= 0.0:
        raise ValueError("average gain undefined at zero separation")
    return params.beta0 / d**params.alpha


def inst_gain_squared(params: ChannelParams, q, w) -> float:
    """Squared instantaneous gain; equals the average gain under unit fading."""
    return avg_gain(params, q, w)
