"""Demonstration ingestion, filtering and dataset export."""

from .calibration import GripperCalibration, MarkerCalibration, calibrate_gripper, width_from_markers
from .episodes import Episode, Recording, SessionManifest, Verdict, inter_gripper_stream, pair_bimanual
from .export import ExportConfig, export_dataset, load_dataset
from .filtering import KinematicModel, kinematic_filter
from .mirror import mirror_reflect

__all__ = [
    "Episode",
    "ExportConfig",
    "GripperCalibration",
    "KinematicModel",
    "MarkerCalibration",
    "Recording",
    "SessionManifest",
    "Verdict",
    "calibrate_gripper",
    "export_dataset",
    "inter_gripper_stream",
    "kinematic_filter",
    "load_dataset",
    "mirror_reflect",
    "pair_bimanual",
    "width_from_markers",
]
