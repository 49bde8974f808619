"""Audio-visual upstream fusion for rail defect detection, with a toy ViT and two-stage evaluation."""

__version__ = "0.1.0"
