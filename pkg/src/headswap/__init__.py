"""Real-time face swapping for video frame streams.

A sparse-template particle filter tracks the head over an ellipsoid model, a
pose-tagged bank supplies the replacement face, and a staged pipeline runs
capture, tracking, swapping and display concurrently.
"""

from .geometry import CameraModel, EllipsoidModel, PoseState

__all__ = ["CameraModel", "EllipsoidModel", "PoseState"]
__version__ = "0.1.0"
