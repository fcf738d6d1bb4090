"""Self-supervised RGB-T correlation-filter tracking.

Arrays are float64 numpy arrays: feature maps are (channels, height, width),
labels and responses (height, width). Boxes are [x, y, w, h] lists.
"""

from ._xic import (
    XicError,
    center_error,
    config_text,
    consistency_loss,
    dcf_response,
    evaluate,
    gaussian_label,
    gradcheck,
    iou,
    lr_at,
    sample_weights,
    synth,
    track,
    train,
    weighted_loss,
)

__all__ = [
    "XicError",
    "center_error",
    "config_text",
    "consistency_loss",
    "dcf_response",
    "evaluate",
    "gaussian_label",
    "gradcheck",
    "iou",
    "lr_at",
    "sample_weights",
    "synth",
    "track",
    "train",
    "weighted_loss",
]
