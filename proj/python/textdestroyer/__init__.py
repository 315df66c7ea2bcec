"""Python bindings for the textdestroyer C++ core."""

from ._textdestroyer import (
    BackendError,
    ConfigError,
    ContractViolation,
    DegenerateClustering,
    IntegrityError,
    IoError,
    alpha_bar,
    ddim_denoise_step,
    ddim_invert_step,
    default_config,
    dilate,
    glyph_fixture,
    kmeans,
    mssim,
    normalize_config,
    psnr,
    run_image,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "ContractViolation",
    "DegenerateClustering",
    "IntegrityError",
    "IoError",
    "alpha_bar",
    "ddim_denoise_step",
    "ddim_invert_step",
    "default_config",
    "dilate",
    "glyph_fixture",
    "kmeans",
    "mssim",
    "normalize_config",
    "psnr",
    "run_image",
]
