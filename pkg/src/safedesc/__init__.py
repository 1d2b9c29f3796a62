"""Symmetry-assessing descriptors of orientation fields around keypoints."""

__version__ = "0.1.0"

from .errors import FormatError, LayoutError, NoReliableAngle, ParameterError
from .field import ComplexField, Image, convolve, hsv_render, make_symmetry_filter, read_field, read_image, write_field
from .orientation import OrientationField, compute_ilst, compute_lst, orientation_field
from .torus import TorusBank, TorusSpec, build_bank, default_spec, intersection_radius, outer_usable_tori
from .descriptor import (
    SafeDescriptor,
    SymmetryIndexRange,
    dense_safe_map,
    extract,
    intrinsic_angle,
    project,
    read_descriptors,
    rotate_descriptor,
    synthesize_ring,
    write_descriptors,
)
from .matcher import MatchScore, ScoreNormalizer, fuse_scores, grid_match, match, tanh_normalize
from .grid import GridSpec, Keypoint, grid_points, periocular_grid, read_keypoints, write_keypoints
from .evaluation import CmcInput, ScoreSet, compute_cmc, compute_det, compute_eer, run_protocol

__all__ = [name for name in dir() if not name.startswith("_")]
