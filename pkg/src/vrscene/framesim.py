"""Per-frame pipeline simulation along a camera path, the affine
frame-time cost model, and VR budget checking.

The cost model is frameTime = fixed + b*drawcalls + c*triangles with
all coefficients >= 0.  The fit solves the 3-variable nonnegative
least-squares problem exactly by enumerating the 8 active-constraint
sign patterns and keeping the feasible minimum.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, CameraPose, frustum_from_camera, quat_slerp
from .reduction import BatchConfig, batch_drawset, build_drawset
from .scene import Scene, scene_fingerprint
from .visibility import OcclusionBake, frustum_cull, occlusion_cull, StaleBakeError


@dataclass(frozen=True)
class CostModel:
    fixed_secs: float = 0.0
    secs_per_drawcall: float = 0.0
    secs_per_triangle: float = 0.0

    def __post_init__(self):
        coeffs = (self.fixed_secs, self.secs_per_drawcall, self.secs_per_triangle)
        if any(not math.isfinite(c) or c < 0.0 for c in coeffs):
            raise ValueError("cost model coefficients must be finite and >= 0")

    def estimate(self, drawcalls: int, triangles: int) -> float:
        return (self.fixed_secs + self.secs_per_drawcall * drawcalls
                + self.secs_per_triangle * triangles)


def estimate_frame_time(cm: CostModel, drawcalls: int, triangles: int) -> float:
    if drawcalls < 0 or triangles < 0:
        raise ValueError("counts must be >= 0")
    return cm.estimate(drawcalls, triangles)


@dataclass(frozen=True)
class FitResult:
    model: CostModel
    residuals: np.ndarray
    rank_deficient: bool = False


def fit_cost_model(samples) -> FitResult:
    """Nonnegative least-squares fit of (drawcalls, triangles) -> frame time.

    samples: iterable of (drawcalls, triangles, frame_time_secs).
    Enumerates every subset of free coefficients, solves the reduced
    unconstrained problem, and picks the feasible solution with the
    smallest residual.  A rank-deficient design warns and keeps the
    minimum-norm solution.
    """
    rows = [(float(d), float(t), float(ft)) for d, t, ft in samples]
    if len(rows) < 3:
        raise ValueError("need at least 3 samples")
    if any(ft <= 0.0 for _, _, ft in rows):
        raise ValueError("frame times must be > 0")
    a = np.array([[1.0, d, t] for d, t, _ in rows])
    y = np.array([ft for _, _, ft in rows])

    rank_deficient = np.linalg.matrix_rank(a) < 3
    if rank_deficient:
        warnings.warn("rank-deficient cost-model design; minimum-norm fit",
                      stacklevel=2)

    best_x = np.zeros(3)
    best_sse = float(np.dot(y, y))
    for size in range(1, 4):
        for subset in itertools.combinations(range(3), size):
            cols = list(subset)
            sol, *_ = np.linalg.lstsq(a[:, cols], y, rcond=None)
            if np.any(sol < -1e-12):
                continue
            x = np.zeros(3)
            x[cols] = np.clip(sol, 0.0, None)
            sse = float(np.sum((a @ x - y) ** 2))
            if sse < best_sse - 1e-15 * max(1.0, best_sse):
                best_sse = sse
                best_x = x
    model = CostModel(*(float(v) for v in best_x))
    return FitResult(model=model, residuals=a @ best_x - y,
                     rank_deficient=rank_deficient)


def save_cost_model(cm: CostModel) -> bytes:
    doc = {
        "fixed_secs": cm.fixed_secs,
        "secs_per_drawcall": cm.secs_per_drawcall,
        "secs_per_triangle": cm.secs_per_triangle,
    }
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def load_cost_model(data: bytes) -> CostModel:
    doc = json.loads(data.decode("utf-8"))
    return CostModel(
        fixed_secs=float(doc["fixed_secs"]),
        secs_per_drawcall=float(doc["secs_per_drawcall"]),
        secs_per_triangle=float(doc["secs_per_triangle"]),
    )


# ---------------------------------------------------------------------------
# budgets


@dataclass(frozen=True)
class Budget:
    """VR targets: ~90 fps, sub-100 ms cycle, 150-175 drawcalls,
    0.3-1 M polygons per frame.  All overridable."""
    min_fps: float = 90.0
    max_cycle_ms: float = 100.0
    drawcall_range: tuple = (150, 175)
    polygon_range: tuple = (300_000, 1_000_000)

    def __post_init__(self):
        if self.drawcall_range[0] > self.drawcall_range[1]:
            raise ValueError("drawcall_range min > max")
        if self.polygon_range[0] > self.polygon_range[1]:
            raise ValueError("polygon_range min > max")


@dataclass
class FrameMetrics:
    frame_index: int
    time_secs: float
    pose: CameraPose
    visible_nodes: int
    triangles: int
    drawcalls: int
    frame_time_secs: float
    fps: float
    budget_violations: list = field(default_factory=list)


@dataclass(frozen=True)
class BudgetSummary:
    passed: bool
    worst_frame: int | None
    violation_count: int
    warning: str | None = None


def check_budgets(frames, budget: Budget):
    """Flag per-frame violations; summary names the worst (slowest) frame."""
    frames = list(frames)
    if not frames:
        return [], BudgetSummary(True, None, 0, warning="no frames to check")
    total = 0
    verdicts = []
    for fm in frames:
        flags = []
        if fm.fps < budget.min_fps:
            flags.append(f"fps {fm.fps:.1f} < {budget.min_fps:g}")
        if fm.drawcalls > budget.drawcall_range[1]:
            flags.append(f"drawcalls {fm.drawcalls} > {budget.drawcall_range[1]}")
        if fm.triangles > budget.polygon_range[1]:
            flags.append(f"polygons {fm.triangles} > {budget.polygon_range[1]}")
        fm.budget_violations = flags
        verdicts.append(flags)
        total += len(flags)
    worst = max(range(len(frames)), key=lambda i: frames[i].frame_time_secs)
    return verdicts, BudgetSummary(passed=(total == 0), worst_frame=worst,
                                   violation_count=total)


# ---------------------------------------------------------------------------
# camera paths


@dataclass(frozen=True)
class CameraPath:
    waypoints: tuple  # of (time_secs, CameraPose), times strictly increasing
    intrinsics: CameraIntrinsics
    frame_hz: float | None = None

    def __post_init__(self):
        times = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must strictly increase")


def pose_on_path(path: CameraPath, t: float) -> CameraPose:
    """Linear position / spherical orientation interpolation, clamped to
    the waypoint span."""
    wps = path.waypoints
    if t <= wps[0][0]:
        return wps[0][1]
    if t >= wps[-1][0]:
        return wps[-1][1]
    for (t0, p0), (t1, p1) in zip(wps, wps[1:]):
        if t0 <= t <= t1:
            u = (t - t0) / (t1 - t0)
            pos = (1.0 - u) * p0.position + u * p1.position
            rot = quat_slerp(p0.orientation, p1.orientation, u)
            return CameraPose(pos, rot)
    return wps[-1][1]  # unreachable


def load_path(data: bytes) -> CameraPath:
    doc = json.loads(data.decode("utf-8"))
    intr = doc["intrinsics"]
    intrinsics = CameraIntrinsics(
        vertical_fov=float(intr["vertical_fov"]),
        aspect=float(intr["aspect"]),
        near=float(intr["near"]),
        far=float(intr["far"]),
        viewport_height=float(intr.get("viewport_height", 1080.0)),
    )
    waypoints = tuple(
        (float(w["t"]),
         CameraPose(np.asarray(w["position"], dtype=float),
                    np.asarray(w["rotation"], dtype=float)))
        for w in doc["waypoints"]
    )
    if not waypoints:
        raise ValueError("path has no waypoints")
    hz = doc.get("frame_hz")
    return CameraPath(waypoints=waypoints, intrinsics=intrinsics,
                      frame_hz=None if hz is None else float(hz))


def save_path(path: CameraPath) -> bytes:
    doc = {
        "intrinsics": {
            "vertical_fov": path.intrinsics.vertical_fov,
            "aspect": path.intrinsics.aspect,
            "near": path.intrinsics.near,
            "far": path.intrinsics.far,
            "viewport_height": path.intrinsics.viewport_height,
        },
        "waypoints": [
            {"t": t, "position": [float(v) for v in p.position],
             "rotation": [float(v) for v in p.orientation]}
            for t, p in path.waypoints
        ],
    }
    if path.frame_hz is not None:
        doc["frame_hz"] = path.frame_hz
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# simulation


def simulate_path(scene: Scene, bake: OcclusionBake | None, path: CameraPath,
                  cm: CostModel, frame_hz: float,
                  batch: BatchConfig = BatchConfig()) -> list:
    """Run frustum -> occlusion -> LOD -> batching -> cost model at
    every sampled pose.  Frame count is ceil(duration * hz) + 1."""
    if frame_hz <= 0.0:
        raise ValueError("frame_hz must be > 0")
    if not path.waypoints:
        raise ValueError("empty path")
    if bake is not None and bake.scene_fingerprint != scene_fingerprint(scene):
        raise StaleBakeError("bake was computed for a different scene")

    t0 = path.waypoints[0][0]
    duration = path.waypoints[-1][0] - t0
    n_frames = int(math.ceil(duration * frame_hz - 1e-9)) + 1
    intr = path.intrinsics

    out = []
    for i in range(n_frames):
        t = t0 + i / frame_hz
        pose = pose_on_path(path, t)
        frustum = frustum_from_camera(pose, intr)
        vs = frustum_cull(scene, frustum, pose)
        if bake is not None:
            vs = occlusion_cull(vs, bake, scene, verify=False)
        items = build_drawset(vs, scene, pose, intr)
        stats = batch_drawset(items, batch)
        ft = estimate_frame_time(cm, stats.drawcalls, stats.triangles)
        out.append(FrameMetrics(
            frame_index=i,
            time_secs=t,
            pose=pose,
            visible_nodes=len(vs.node_ids),
            triangles=stats.triangles,
            drawcalls=stats.drawcalls,
            frame_time_secs=ft,
            fps=1.0 / ft if ft > 0.0 else float("inf"),
        ))
    return out


def metrics_csv(frames) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame", "t", "visible", "triangles", "drawcalls",
                     "frame_time_ms", "fps", "violations"])
    for fm in frames:
        writer.writerow([
            fm.frame_index,
            "%.6f" % fm.time_secs,
            fm.visible_nodes,
            fm.triangles,
            fm.drawcalls,
            "%.4f" % (fm.frame_time_secs * 1e3),
            "%.2f" % fm.fps,
            ";".join(fm.budget_violations),
        ])
    return buf.getvalue().encode("utf-8")
