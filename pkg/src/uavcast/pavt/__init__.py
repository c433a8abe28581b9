"""Monte-Carlo pseudo-analog transmission simulator."""

from .pipeline import (
    LLSE,
    ZERO_FORCING,
    EndToEndResult,
    ScaledBlocks,
    decode,
    end_to_end,
    select_and_scale,
    transmit,
)
from .sources import load_raw_video, synthetic_gop
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
    "LLSE",
    "ZERO_FORCING",
    "EndToEndResult",
    "ScaledBlocks",
    "decode",
    "end_to_end",
    "select_and_scale",
    "transmit",
    "load_raw_video",
    "synthetic_gop",
    "CoefficientBlock",
    "Gop",
    "Whitener",
    "blockize_and_sort",
    "dct3_forward",
    "dct3_inverse",
    "reassemble",
]
