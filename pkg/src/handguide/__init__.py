"""Sensorless hand guidance in simulation.

Register a known robot model into a scene cloud, convert streamed hand
positions near the robot into per-joint angle updates, and execute them
through an interpolated joint-position controller.
"""

__version__ = "0.1.0"

from .geometry import RigidTransform, rotation_about_axis, rpy_matrix, rotation_angle
from .model import (
    Box,
    Cylinder,
    Hull,
    JointLimits,
    JointSpec,
    LinkSpec,
    ModelError,
    ModelParseError,
    ModelValidationError,
    RobotModel,
    active_zone,
    forward_kinematics,
    joint_world_frame,
    load_model,
    load_model_file,
    model_to_document,
    zone_contains,
    zone_distance,
)
from .guidance import (
    DegenerateRadiusError,
    GuidanceConfig,
    GuidanceState,
    GuidanceUpdate,
    HandSample,
    StreamOrderError,
    decompose,
    joint_step,
    load_hand_trajectory,
    project_onto_plane,
    save_hand_trajectory,
    session_step,
    signed_angle_about_axis,
)
from .cloud import (
    NeighborIndex,
    PointCloud,
    TriangleMesh,
    crop_sphere,
    load_cloud,
    mls_smooth,
    remove_outliers,
    sample_mesh,
    save_cloud,
    save_mesh_obj,
)
from .registration import (
    CongruentParams,
    EmptyCropError,
    IcpParams,
    NoCongruentBaseError,
    NoCorrespondencesError,
    RegistrationError,
    RegistrationResult,
    congruent_set_register,
    diagonal_intersection_ratios,
    estimate_rigid,
    icp,
    register_pipeline,
    rms_closest,
    robot_surface_cloud,
)
from .simcontrol import (
    ControllerState,
    MotionLimits,
    SceneSpec,
    controller_tick,
    replay,
    synth_scene,
    write_joint_trajectory,
)
from .benchmark import (
    BenchmarkStats,
    ScenarioSpec,
    TrialRecord,
    clutter_comparison,
    default_scenarios,
    format_table,
    run_benchmark,
    write_records,
)
