"""Gaussian-splat reconstruction with uncertainty-guided mask fusion
and diffusion-based inpainting of masked regions."""

from .backends import IdentityBackend, InpaintBackend, OracleBackend, RemoteBackend
from .cloud import GaussianCloud, init_cloud, load_cloud, save_cloud
from .colmap import export_colmap, import_colmap
from .geometry import CameraView, look_at_camera
from .render import render, render_naive
from .scene import SceneDataset, SceneView, load_dataset, train_test_split
from .schedule import NoiseSchedule, concept_inpaint_local
from .training import TrainConfig, train
from .visibility import fuse_mask, uncertainty_map

__version__ = "0.1.0"

__all__ = [
    "CameraView",
    "GaussianCloud",
    "IdentityBackend",
    "InpaintBackend",
    "NoiseSchedule",
    "OracleBackend",
    "RemoteBackend",
    "SceneDataset",
    "SceneView",
    "TrainConfig",
    "concept_inpaint_local",
    "export_colmap",
    "fuse_mask",
    "import_colmap",
    "init_cloud",
    "load_cloud",
    "load_dataset",
    "look_at_camera",
    "render",
    "render_naive",
    "save_cloud",
    "train",
    "train_test_split",
    "uncertainty_map",
]
