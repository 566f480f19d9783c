"""Covering/packing-number experiments for convex function classes."""

from .geometry import (
    AffineMap,
    ConvexBody,
    Decomposition,
    RotatedBox,
    bounding_box,
    erode,
    load_body,
    normalize,
    save_body,
    shell_decompose,
    triangulate,
)

__all__ = [
    "AffineMap",
    "ConvexBody",
    "Decomposition",
    "RotatedBox",
    "bounding_box",
    "erode",
    "load_body",
    "normalize",
    "save_body",
    "shell_decompose",
    "triangulate",
]

__version__ = "0.1.0"
