import numpy as np
import pytest

from vrscene.citygen import GenConfig, generate_city
from vrscene.geometry import CameraIntrinsics, CameraPose, look_rotation


@pytest.fixture(scope="session")
def small_city():
    cfg = GenConfig(blocks_x=3, blocks_y=3, buildings_per_block=4,
                    triangles_per_building=(100, 300), seed=7)
    return generate_city(cfg)


@pytest.fixture
def street_camera():
    pose = CameraPose(np.array([-5.0, 24.0, 1.7]), look_rotation([1.0, 0.0, 0.0]))
    intr = CameraIntrinsics(vertical_fov=np.deg2rad(60.0), aspect=16 / 9,
                            near=0.1, far=500.0)
    return pose, intr


# ---------------------------------------------------------------------------
# independent test-side oracles


def segment_hits_box_oracle(p, q, lo, hi):
    """Independent segment/box overlap check via explicit interval
    clipping per axis (test-side re-implementation)."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    enter, leave = 0.0, 1.0
    for k in range(3):
        a, b = p[k], q[k] - p[k]
        if b == 0.0:
            if not (lo[k] <= a <= hi[k]):
                return False
            continue
        t_lo = (lo[k] - a) / b
        t_hi = (hi[k] - a) / b
        if t_lo > t_hi:
            t_lo, t_hi = t_hi, t_lo
        enter = max(enter, t_lo)
        leave = min(leave, t_hi)
    return enter <= leave


def sample_box_points(lo, hi, n_per_axis):
    """Regular n^3 grid covering the closed box (surface and volume)."""
    axes = [np.linspace(lo[k], hi[k], n_per_axis) for k in range(3)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)
