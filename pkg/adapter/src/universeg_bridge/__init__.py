"""UniverSeg served over the segmentation bridge protocol (version 1)."""

__version__ = "0.1.0"
