"""VQ digital semantic image transmission simulator."""

from ._core import (
    CodecState,
    RunConfig,
    VqdiscError,
    bcr,
    ber_theory_qpsk_awgn,
    load_image,
    ms_ssim,
    psnr,
    sweep,
    synthetic_corpus,
    train,
)

__all__ = [
    "CodecState",
    "RunConfig",
    "VqdiscError",
    "bcr",
    "ber_theory_qpsk_awgn",
    "load_image",
    "ms_ssim",
    "psnr",
    "sweep",
    "synthetic_corpus",
    "train",
]
