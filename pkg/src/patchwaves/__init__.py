"""Staggered-grid patch schemes for 2D wave systems."""

from .grid_geometry import (
    EdgeLayerSpec,
    MicroGridSpec,
    NodeKind,
    PatchGridLayout,
    Stencil,
    classify_layout,
    decode_id,
    encode_id,
    enumerate_edge_types,
    is_compatible,
    node_kind,
)

__all__ = [
    "EdgeLayerSpec",
    "MicroGridSpec",
    "NodeKind",
    "PatchGridLayout",
    "Stencil",
    "classify_layout",
    "decode_id",
    "encode_id",
    "enumerate_edge_types",
    "is_compatible",
    "node_kind",
]

__version__ = "0.1.0"
