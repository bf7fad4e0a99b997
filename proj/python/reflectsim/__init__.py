"""Reflectarray near-field imaging and slab permittivity estimation."""

from ._core import (
    IoError,
    NumericalError,
    ValidationError,
    add_noise,
    default_config,
    estimate,
    focus_stencil,
    fresnel,
    go_predict,
    needs_flip,
    po_received,
    psf,
    read_measurements,
    reconstruct_profile,
    scene_hash,
    slab_reflection,
    synthesize,
    with_target,
    without_target,
)

__all__ = [
    "IoError",
    "NumericalError",
    "ValidationError",
    "add_noise",
    "default_config",
    "estimate",
    "focus_stencil",
    "fresnel",
    "go_predict",
    "needs_flip",
    "po_received",
    "psf",
    "read_measurements",
    "reconstruct_profile",
    "scene_hash",
    "slab_reflection",
    "synthesize",
    "with_target",
    "without_target",
]
