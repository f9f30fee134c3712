"""Scene-budget optimization engine and co-simulation pose bridge."""

from .geometry import (
    AABB,
    CameraIntrinsics,
    CameraPose,
    Classification,
    Frustum,
    Plane,
    Transform,
    classify_aabb_frustum,
    frustum_from_camera,
    screen_coverage,
    segment_intersects_aabb,
    transform_aabb,
)
from .scene import (
    LODGroup,
    LODLevel,
    MaterialRef,
    MeshAsset,
    Scene,
    SceneNode,
    SceneStats,
    load_scene,
    save_scene,
    scene_stats,
    validate_scene,
    world_bounds,
)
from .visibility import (
    BakeConfig,
    OcclusionBake,
    VisibleSet,
    bake_occlusion,
    cell_for_point,
    frustum_cull,
    is_fully_occluded,
    occlusion_cull,
)
from .reduction import BatchConfig, DrawItem, DrawStats, batch_drawset, build_drawset, select_lod
from .pipeline import (
    OptimizationReport,
    OptimizeConfig,
    StageReport,
    crop_to_section,
    decimate_mesh,
    emit_report,
    optimize_scene,
)
from .framesim import (
    Budget,
    CameraPath,
    CostModel,
    FrameMetrics,
    check_budgets,
    estimate_frame_time,
    fit_cost_model,
    simulate_path,
)
from .citygen import GenConfig, generate_city
from .bridge import (
    CycleStats,
    FrameTransform,
    InterpBuffer,
    VehicleStateMsg,
    apply_frame_transform,
    decode_frame,
    encode_frame,
    measure_cycle,
    serve,
)

__version__ = "0.1.0"
