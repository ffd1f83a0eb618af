"""Conformal prediction regions for camera poses on SE(3).

Split conformal calibration with a geodesic nonconformity score, plus a
difficulty-normalized (adaptive) variant whose per-frame scale comes from a
small MLP over kinematic features. Submodules:

``se3_geometry``  rotations, poses, log/exp maps, score functions
``trajectory``    pose files, trajectories, displacement, evaluation splits
``predictors``    constant-velocity baseline and external prediction files
``conformal``     calibration quantiles, thresholds, coverage tests
``difficulty``    kinematic features and the difficulty MLP
``evaluation``    quartile stratification, coverage reports, synthetic data
``cli``           the ``posecp`` command
"""
from posecp.conformal import (
    ADAPTIVE,
    STANDARD,
    CalibrationResult,
    ScoreRecord,
    calibrate_adaptive,
    calibrate_standard,
    conformal_quantile,
    coverage_mask,
    covers,
    region_radius,
)
from posecp.difficulty import (
    DifficultyModel,
    KinematicFeatures,
    TeacherScore,
    TrainConfig,
    feature_matrix,
    fit_bridge,
    kinematic_features,
    predict_sigma,
    sigma_for_trajectory,
    train_bridge,
)
from posecp.errors import ParseError, PoseCPError, ValidationError
from posecp.evaluation import (
    CoverageReport,
    SyntheticConfig,
    coverage_by_quartile,
    displacement_by_quartile,
    generate_synthetic,
    q4_overlap,
    quartile_partition,
    stratify_by_motion,
)
from posecp.predictors import PredictionRecord, const_vel_predict, const_vel_predictions, load_external_predictions
from posecp.rng import make_rng
from posecp.se3_geometry import (
    Pose,
    Rotation,
    ScoreWeights,
    euclidean_score,
    geodesic_score,
    so3_exp,
    so3_log,
)
from posecp.trajectory import Frame, SplitSpec, Trajectory, load_trajectory, split

__version__ = "0.1.0"
