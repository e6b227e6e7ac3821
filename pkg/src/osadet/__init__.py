"""osadet: multimodal sleep-apnea event detection at desk scale.

Synthetic polysomnography generation with rule-based oracle scoring, signal
preprocessing, a cross-modality U-Net + Transformer event detector trained
with masked-modality dropout, and an evaluation stack covering event
detection, AHI estimation, severity grading and screening.
"""

__version__ = "0.1.0"

from .core import (
    ChannelKind,
    EventInterval,
    EventLabel,
    ModalityMask,
    Recording,
    SampleSeries,
    interval_iou,
    onset_end,
)

__all__ = [
    "ChannelKind",
    "EventInterval",
    "EventLabel",
    "ModalityMask",
    "Recording",
    "SampleSeries",
    "interval_iou",
    "onset_end",
    "__version__",
]
