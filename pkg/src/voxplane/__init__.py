"""Voxel-map plane segmentation for legged-robot foothold planning."""

import os as _os

# the TBB layer is often missing; prefer OpenMP and fall back to the built-in queue
if "NUMBA_THREADING_LAYER" not in _os.environ:
    try:
        import numba as _numba
        from numba.np.ufunc import omppool as _omp  # noqa: F401
        _numba.config.THREADING_LAYER = "omp"
    except ImportError:  # pragma: no cover
        import numba as _numba
        _numba.config.THREADING_LAYER = "workqueue"

from .frames import InvalidPoseError, Pose, SensorFrame, load_frames, read_frames, write_frames
from .plane_fit import PlaneModel, RansacParams, fit_planes, refine_plane
from .polygonize import DegeneratePolygonError, PlanePolygon, polygonize, polygonize_all
from .segmentation import SegmentationParams, segment
from .voxel_map import VoxelGrid, clear_rays, integrate_frame, recenter

__version__ = "0.1.0"

__all__ = [
    "DegeneratePolygonError", "InvalidPoseError", "PlaneModel", "PlanePolygon", "Pose",
    "RansacParams", "SegmentationParams", "SensorFrame", "VoxelGrid", "clear_rays",
    "fit_planes", "integrate_frame", "load_frames", "polygonize", "polygonize_all",
    "read_frames", "recenter", "refine_plane", "segment", "write_frames",
]
