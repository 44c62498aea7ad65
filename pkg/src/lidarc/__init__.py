"""LiDAR semantic-segmentation corruption benchmark toolkit."""

__version__ = "0.1.0"

from .augment import instance_cutmix, mix3d
from .benchmark import CorruptionSpec, benchmark_specs, corrupt_cloud, run_corruptions
from .device import BeamKMeans, CrossDevice, assign_beam_labels, reduce_beams, simulate_device, subsample_azimuth
from .errors import LidarcError
from .labels import ProvenanceSet, Tag, remap_labels, remap_labels_by_nn
from .metrics import ConfusionMatrix, RobustnessReport, corruption_score, miou, robustness_summary
from .noise import GlobalOutliers, LocalDistortion, apply_global_outliers, apply_local_distortion
from .representation import polar_project, range_project, render_range_image, voxelize
from .scan_io import LabelSet, PointCloud, ScanManifest, load_manifest, read_labels, read_scan
from .synth import SceneSpec, generate
from .weather import FogSimulator, SnowSimulator, apply_fog, apply_snowfall

__all__ = [
    "__version__", "BeamKMeans", "ConfusionMatrix", "CorruptionSpec", "CrossDevice", "FogSimulator",
    "GlobalOutliers", "LabelSet", "LidarcError", "LocalDistortion", "PointCloud", "ProvenanceSet",
    "RobustnessReport", "ScanManifest", "SceneSpec", "SnowSimulator", "Tag", "apply_fog",
    "apply_global_outliers", "apply_local_distortion", "apply_snowfall", "assign_beam_labels",
    "benchmark_specs", "corrupt_cloud", "corruption_score", "generate", "instance_cutmix",
    "load_manifest", "miou", "mix3d", "polar_project", "range_project", "read_labels", "read_scan",
    "reduce_beams", "remap_labels", "remap_labels_by_nn", "render_range_image", "robustness_summary",
    "run_corruptions", "simulate_device", "subsample_azimuth", "voxelize",
]
