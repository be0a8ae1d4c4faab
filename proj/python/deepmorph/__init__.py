"""Trainable morphology blocks for segment-based text detection."""

from ._core import (
    Error,
    MorphBlock,
    balanced_ce_ohem,
    balanced_ce_tc,
    dilate,
    erode,
    generate,
    jittered_map,
    load_map,
    nms,
    polygon_iou,
    rotated_iou,
    run_cli,
    save_map,
    shrink_polygon,
    smooth_l1,
    tw_from_th,
)

__all__ = [
    "Error",
    "MorphBlock",
    "balanced_ce_ohem",
    "balanced_ce_tc",
    "dilate",
    "erode",
    "generate",
    "jittered_map",
    "load_map",
    "nms",
    "polygon_iou",
    "rotated_iou",
    "run_cli",
    "save_map",
    "shrink_polygon",
    "smooth_l1",
    "tw_from_th",
]
