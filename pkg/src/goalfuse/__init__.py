"""Multimodal target-object and action anticipation.

Fuses a language model's semantic read of the scene context with a physical
goal-area prediction from the person's observed trajectory, then predicts
the action at the winning object.
"""

from .errors import GoalfuseError
from .fusion import ObjectProbabilityMap, Telemetry, fuse, top_k
from .llm import (
    AblationMode,
    HeuristicLlmClient,
    HttpLlmClient,
    LlmEndpointConfig,
    SceneContext,
    ScriptedLlmClient,
    judge_action,
    parse_ranks,
    predict_action,
    predict_target_ranks,
    ranks_to_probabilities,
)
from .predictor import (
    GeometricGoalPredictor,
    UNetSpec,
    UnetGoalPredictor,
    UniformGoalPredictor,
    geometric_predict,
    make_random_weights,
    object_probabilities,
    unet_forward,
)
from .scene import (
    GridGeometry,
    Heatmap,
    ObjectRegion,
    Scene,
    SceneMap,
    geodesic_distance,
    load_scene,
    object_overlap_mass,
    pixel_to_world,
    world_to_pixel,
)
from .trajectory import (
    RasterStack,
    Trajectory,
    headings,
    progress_distance,
    rasterize,
    resample_to_epochs,
)
from .weights import WeightContainer, load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "AblationMode",
    "GeometricGoalPredictor",
    "GoalfuseError",
    "GridGeometry",
    "Heatmap",
    "HeuristicLlmClient",
    "HttpLlmClient",
    "LlmEndpointConfig",
    "ObjectProbabilityMap",
    "ObjectRegion",
    "RasterStack",
    "Scene",
    "SceneContext",
    "SceneMap",
    "ScriptedLlmClient",
    "Telemetry",
    "Trajectory",
    "UNetSpec",
    "UnetGoalPredictor",
    "UniformGoalPredictor",
    "WeightContainer",
    "fuse",
    "geodesic_distance",
    "geometric_predict",
    "headings",
    "judge_action",
    "load_scene",
    "load_weights",
    "make_random_weights",
    "object_overlap_mass",
    "object_probabilities",
    "parse_ranks",
    "pixel_to_world",
    "predict_action",
    "predict_target_ranks",
    "progress_distance",
    "ranks_to_probabilities",
    "rasterize",
    "resample_to_epochs",
    "save_weights",
    "top_k",
    "unet_forward",
    "world_to_pixel",
]
