"""Exact metric kernels, audio utilities, and checkpoint inference.

The heavy lifting (training, evaluation harness, plotting) lives in the
`snrilab` command-line binary; this package exposes the numeric core so
results can be checked and reused from Python.
"""

from ._snrilab import (
    Enhancer,
    Error,
    gradcheck,
    logmel,
    make_corpus,
    mix_at_snr,
    mixture_consistency,
    pcm16_quantize,
    postmix_control,
    sar,
    snr,
    snri,
    snri_target_loss,
    thresholded_snr_loss,
    wav_read,
    wav_write,
)

__all__ = [
    "Enhancer",
    "Error",
    "gradcheck",
    "logmel",
    "make_corpus",
    "mix_at_snr",
    "mixture_consistency",
    "pcm16_quantize",
    "postmix_control",
    "sar",
    "snr",
    "snri",
    "snri_target_loss",
    "thresholded_snr_loss",
    "wav_read",
    "wav_write",
]

__version__ = "0.1.0"
