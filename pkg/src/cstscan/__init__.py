"""Tensor-cascade proposal extraction, classification and detection metrics."""

from .image import GrayImage, compute_histogram, equalize_adaptive, make_patch_grid, to_grayscale
from .proposals import (
    BoundingBox,
    CstConfig,
    Proposal,
    binarize,
    bounding_box,
    clean_mask,
    crop,
    extract_proposals,
    has_more_objects,
    label_components,
    remove_objects,
    trace_contours,
    update_scaling,
)
from .tensor import (
    build_cascade,
    directional_gradients,
    gaussian_window,
    make_orientations,
    select_coherent,
    singular_values,
    tensor_map,
)

__version__ = "0.1.0"

__all__ = [
    "GrayImage",
    "BoundingBox",
    "CstConfig",
    "Proposal",
    "binarize",
    "bounding_box",
    "build_cascade",
    "clean_mask",
    "compute_histogram",
    "crop",
    "directional_gradients",
    "equalize_adaptive",
    "extract_proposals",
    "gaussian_window",
    "has_more_objects",
    "label_components",
    "make_orientations",
    "make_patch_grid",
    "remove_objects",
    "select_coherent",
    "singular_values",
    "tensor_map",
    "to_grayscale",
    "trace_contours",
    "update_scaling",
]
