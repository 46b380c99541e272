"""Collective semantic landmark mapping from crowd-sourced annotated recordings.

Each recording carries free-text annotations at positions in its own local
frame. The package labels the notes, scores how related observations are,
rigidly aligns every recording into one shared frame by minimizing a
relatedness-weighted squared-distance objective, and clusters the aligned
observations into a map of labeled landmarks.
"""

from crowdmap.aggregate import LandmarkCluster, SemanticLandmarkMap, assemble_map, cluster
from crowdmap.align import (
    AlignmentConfig,
    AlignmentProblem,
    AlignmentResult,
    gradient,
    objective,
    optimize,
)
from crowdmap.errors import (
    CrowdmapError,
    EvaluationError,
    GenerationError,
    InputError,
    OutOfRangeError,
    ProtocolError,
    ServiceError,
    TransportError,
)
from crowdmap.evaluate import EvalReport, GroundTruth, positional_error, umeyama_similarity
from crowdmap.geometry import (
    Observation,
    Point2,
    Recording,
    RigidTransform2,
    TrajectorySample,
    apply,
    inverse,
)
from crowdmap.identify import CategoryTable, identify_label
from crowdmap.relatedness import RelatednessMatrix, RelatednessOptions, build_matrix
from crowdmap.simulate import SimConfig, run_experiment, sweep
from crowdmap.trajectory import StationaryParams, stationary_position

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig", "AlignmentProblem", "AlignmentResult", "CategoryTable", "CrowdmapError",
    "EvalReport", "EvaluationError", "GenerationError", "GroundTruth", "InputError",
    "LandmarkCluster", "Observation", "OutOfRangeError", "Point2", "ProtocolError", "Recording",
    "RelatednessMatrix", "RelatednessOptions", "RigidTransform2", "SemanticLandmarkMap",
    "ServiceError", "SimConfig", "StationaryParams", "TrajectorySample", "TransportError",
    "apply", "assemble_map", "build_matrix", "cluster", "gradient", "identify_label", "inverse",
    "objective", "optimize", "positional_error", "run_experiment", "stationary_position",
    "sweep", "umeyama_similarity",
]
