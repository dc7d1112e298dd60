"""Demonstration-guided manipulation RL at desk scale."""

from demorl.geometry import AnchorSet, Pose

__all__ = ["Pose", "AnchorSet"]
__version__ = "0.1.0"
