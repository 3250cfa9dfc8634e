"""Wood-leaf classification for tree point clouds."""

from ._leafwood import (
    DEFAULT_MAX_POINTS,
    DEFAULT_RADIUS,
    ContractError,
    DomainError,
    FormatError,
    IoError,
    Model,
    NumericError,
    ParseError,
    evaluate,
    export_colored_ply,
    farthest_point_sampling,
    generate_tree,
    linearity,
    load_xyz,
    plan_split,
    radius_query,
    random_centroids,
    save_xyz,
    split,
    tpmp,
)

WOOD = 1
LEAF = 0

__all__ = [
    "DEFAULT_MAX_POINTS",
    "DEFAULT_RADIUS",
    "ContractError",
    "DomainError",
    "FormatError",
    "IoError",
    "LEAF",
    "Model",
    "NumericError",
    "ParseError",
    "WOOD",
    "evaluate",
    "export_colored_ply",
    "farthest_point_sampling",
    "generate_tree",
    "linearity",
    "load_xyz",
    "plan_split",
    "radius_query",
    "random_centroids",
    "save_xyz",
    "split",
    "tpmp",
]
