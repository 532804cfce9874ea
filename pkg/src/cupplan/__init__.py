"""Two-view acetabular cup planning and RGBD augmented-reality alignment,
simulated end to end at desk scale."""

from . import arsim, calib, drr, errors, geom, implant, planner, scene, stereo, track

__all__ = [
    "arsim",
    "calib",
    "drr",
    "errors",
    "geom",
    "implant",
    "planner",
    "scene",
    "stereo",
    "track",
]

__version__ = "0.1.0"
