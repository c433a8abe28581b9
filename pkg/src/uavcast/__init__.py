"""Max-min video-quality optimization for a UAV broadcast link.

Jointly optimizes per-slot transmission power and the fixed-wing UAV
trajectory to maximize the worst ground user's reconstruction PSNR under
total-energy and kinematic constraints, and validates the analytic
distortion model with a Monte-Carlo pseudo-analog transmission simulator.
"""

__version__ = "0.1.0"
