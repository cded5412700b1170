from .config import PRESETS, ScaleConfig, get_scale
from .corrnet import CorrNet, build_cost_volume
from .decoders import PointDecoder, VolumeDecoder
from .dispnet import DispNetB
from .encoder import RecEncoder
from .layers import BatchNorm, Conv, ConvTranspose, FireModule, Linear, ResidualBlock
from .pipeline import PipelineOutput, StereoPipeline, load_pipeline, pipeline_from_header

__all__ = [
    "ScaleConfig",
    "PRESETS",
    "get_scale",
    "DispNetB",
    "RecEncoder",
    "CorrNet",
    "build_cost_volume",
    "VolumeDecoder",
    "PointDecoder",
    "StereoPipeline",
    "PipelineOutput",
    "load_pipeline",
    "pipeline_from_header",
    "Conv",
    "ConvTranspose",
    "Linear",
    "BatchNorm",
    "ResidualBlock",
    "FireModule",
]
