"""ctgi: single-exposure video capture and recovery.

A K-frame dynamic scene is modulated by fast binary tile patterns and
accumulated into one slow-camera exposure; the frames are then recovered per
super-pixel by intensity correlation, an exact linear solve, a sliding-window
high-resolution variant, or TV-regularized compressive sensing.
"""

from .basis import (
    HadamardMatrix,
    ModulationBasis,
    binarize_row,
    build_hadamard_basis,
    build_random_basis,
    deserialize_basis,
    serialize_basis,
    walsh_hadamard,
)
from .compressive import (
    CsProblem,
    SamplingPlan,
    SolverOptions,
    TvSolveResult,
    build_problem,
    plan_sampling,
    reconstruct_cs,
    solve_tv,
    tv_objective,
)
from .correlation import (
    ReconstructionResult,
    apply_threshold,
    reconstruct_correlation,
    reconstruct_exact,
    reconstruct_sliding,
    recover_dc_frame,
)
from .geometry import SuperPixelGeometry
from .metrics import MetricsReport, pearson, psnr, rmse
from .scene import (
    ExposureImage,
    NoiseModel,
    Video,
    add_noise,
    direct_capture,
    modulate_accumulate,
    simulate_exposure,
    upsample_scene,
)

__version__ = "0.1.0"

__all__ = [
    "ExposureImage",
    "HadamardMatrix",
    "CsProblem",
    "MetricsReport",
    "ModulationBasis",
    "NoiseModel",
    "ReconstructionResult",
    "SamplingPlan",
    "SolverOptions",
    "SuperPixelGeometry",
    "TvSolveResult",
    "Video",
    "add_noise",
    "apply_threshold",
    "binarize_row",
    "build_hadamard_basis",
    "build_problem",
    "build_random_basis",
    "deserialize_basis",
    "direct_capture",
    "modulate_accumulate",
    "pearson",
    "plan_sampling",
    "psnr",
    "reconstruct_correlation",
    "reconstruct_cs",
    "reconstruct_exact",
    "reconstruct_sliding",
    "recover_dc_frame",
    "rmse",
    "serialize_basis",
    "simulate_exposure",
    "solve_tv",
    "tv_objective",
    "upsample_scene",
    "walsh_hadamard",
]
