from .camera import StereoCamera
from .dataset import StereoSample, generate_dataset, load_sample
from .geometry import compute_occlusion, depth_to_disparity
from .mesh import Mesh, make_primitive
from .points import PointCloud, sample_surface
from .render import Lighting, render_stereo
from .voxel import VoxelGrid, voxelize

__all__ = [
    "StereoCamera",
    "Mesh",
    "make_primitive",
    "Lighting",
    "render_stereo",
    "depth_to_disparity",
    "compute_occlusion",
    "VoxelGrid",
    "voxelize",
    "PointCloud",
    "sample_surface",
    "StereoSample",
    "generate_dataset",
    "load_sample",
]
