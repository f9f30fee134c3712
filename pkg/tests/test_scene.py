import dataclasses
import json

import numpy as np
import pytest

from vrscene.citygen import GenConfig, city_plan, generate_city
from vrscene.geometry import Transform, quat_from_axis_angle
from vrscene.scene import (
    LODGroup,
    LODLevel,
    MaterialRef,
    Scene,
    SceneFormatError,
    SceneNode,
    SceneValidationError,
    load_scene,
    make_mesh,
    save_scene,
    scene_stats,
    scenes_equal,
    validate_scene,
    world_bounds,
)

BOX_POSITIONS = [
    [-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, 0.5, -0.5], [-0.5, 0.5, -0.5],
    [-0.5, -0.5, 0.5], [0.5, -0.5, 0.5], [0.5, 0.5, 0.5], [-0.5, 0.5, 0.5],
]
BOX_TRIANGLES = [
    [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
    [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
    [1, 2, 6], [1, 6, 5], [3, 0, 4], [3, 4, 7],
]


def box_scene(n_nodes=1):
    mesh = make_mesh("box", BOX_POSITIONS, BOX_TRIANGLES)
    mat = MaterialRef("plaster", "plaster")
    nodes = tuple(
        SceneNode(id=f"n{i}", name=f"node {i}", transform=Transform.identity(),
                  mesh_id="box", material_id="plaster", is_static=True)
        for i in range(n_nodes)
    )
    return Scene(frame_id="map", meshes={"box": mesh},
                 materials={"plaster": mat}, nodes=nodes)


# ---------------------------------------------------------------------------
# load / save


def test_load_minimal_empty_scene():
    scene = load_scene(b'{"frame_id": "map"}')
    assert scene.frame_id == "map"
    assert scene.nodes == ()


def test_load_reports_syntax_position():
    with pytest.raises(SceneFormatError, match="line"):
        load_scene(b'{"frame_id": "map",\n "nodes": [,]}')


def test_load_missing_required_field():
    with pytest.raises(SceneFormatError, match="frame_id"):
        load_scene(b"{}")


def test_load_unknown_optional_field_ignored():
    scene = load_scene(b'{"frame_id": "map", "author": "someone"}')
    assert scene.frame_id == "map"


def test_dangling_mesh_reference_named():
    doc = {"frame_id": "map", "nodes": [{
        "id": "n0", "name": "n0", "translation": [0, 0, 0],
        "rotation": [1, 0, 0, 0], "scale": [1, 1, 1], "mesh": "m9"}]}
    with pytest.raises(SceneValidationError, match="m9"):
        load_scene(json.dumps(doc).encode())


def test_round_trip_identity():
    scene = box_scene(3)
    assert scenes_equal(load_scene(save_scene(scene)), scene)


def test_save_deterministic():
    scene = box_scene(5)
    assert save_scene(scene) == save_scene(scene)


def test_empty_scene_round_trip():
    scene = Scene(frame_id="map")
    reloaded = load_scene(save_scene(scene))
    assert scenes_equal(scene, reloaded)


def test_generated_city_round_trips_losslessly():
    cfg = GenConfig(blocks_x=5, blocks_y=5, buildings_per_block=4,
                    triangles_per_building=(50, 200), seed=11)
    scene = generate_city(cfg)
    data = save_scene(scene)
    assert save_scene(load_scene(data)) == data


# ---------------------------------------------------------------------------
# validation


def test_valid_scene_no_violations():
    assert validate_scene(box_scene()) == []


def test_zero_scale_violation():
    scene = box_scene()
    bad = dataclasses.replace(
        scene.nodes[0],
        transform=Transform([0, 0, 0], [1, 0, 0, 0], [0.0, 1.0, 1.0]))
    scene = dataclasses.replace(scene, nodes=(bad,))
    violations = validate_scene(scene)
    assert len(violations) == 1
    assert "scale" in violations[0]


def test_nonstatic_occluder_violation():
    scene = box_scene()
    bad = dataclasses.replace(scene.nodes[0], is_static=False, is_occluder=True)
    scene = dataclasses.replace(scene, nodes=(bad,))
    violations = validate_scene(scene)
    assert len(violations) == 1
    assert "occluder" in violations[0]


def test_lod_with_direct_mesh_violation():
    scene = box_scene()
    bad = dataclasses.replace(
        scene.nodes[0],
        lod=LODGroup((LODLevel("box", 0.1),), cull_below=0.01))
    scene = dataclasses.replace(scene, nodes=(bad,))
    assert any("exclusive" in v for v in validate_scene(scene))


def test_nonincreasing_lod_thresholds_violation():
    scene = box_scene()
    bad = dataclasses.replace(
        scene.nodes[0], mesh_id=None,
        lod=LODGroup((LODLevel("box", 0.1), LODLevel("box", 0.1)), 0.01))
    scene = dataclasses.replace(scene, nodes=(bad,))
    assert any("strictly decrease" in v for v in validate_scene(scene))


def test_bad_quaternion_violation():
    scene = box_scene()
    bad = dataclasses.replace(
        scene.nodes[0],
        transform=Transform([0, 0, 0], [1, 1, 0, 0], [1, 1, 1]))
    scene = dataclasses.replace(scene, nodes=(bad,))
    assert any("unit quaternion" in v for v in validate_scene(scene))


def test_triangle_index_out_of_range():
    mesh = make_mesh("bad", [[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 9]])
    scene = Scene(frame_id="map", meshes={"bad": mesh})
    assert any("index out of range" in v for v in validate_scene(scene))


# ---------------------------------------------------------------------------
# stats


def test_stats_ten_boxes():
    stats = scene_stats(box_scene(10))
    assert stats.triangle_count == 120
    assert stats.naive_drawcalls == 10
    assert stats.node_count == 10


def test_stats_empty_scene():
    stats = scene_stats(Scene(frame_id="map"))
    assert stats.triangle_count == 0
    assert stats.naive_drawcalls == 0


def test_stats_match_generator_plan():
    cfg = GenConfig(blocks_x=4, blocks_y=3, buildings_per_block=3,
                    triangles_per_building=(40, 90), seed=3)
    scene = generate_city(cfg)
    plan = city_plan(cfg)
    stats = scene_stats(scene)
    assert stats.node_count == 4 * 3 * 3 == len(plan)
    assert stats.triangle_count == sum(p.triangles for p in plan)


def test_stats_invariant_under_reordering_and_rigid_motion():
    scene = box_scene(4)
    stats = scene_stats(scene)
    shuffled = dataclasses.replace(scene, nodes=scene.nodes[::-1])
    assert scene_stats(shuffled).triangle_count == stats.triangle_count
    rotated_nodes = tuple(
        dataclasses.replace(n, transform=Transform(
            [5.0, -2.0, 1.0], quat_from_axis_angle([0, 0, 1], 1.0), [1, 1, 1]))
        for n in scene.nodes)
    rotated = dataclasses.replace(scene, nodes=rotated_nodes)
    assert scene_stats(rotated).triangle_count == stats.triangle_count


# ---------------------------------------------------------------------------
# world bounds


def test_world_bounds_unit_box():
    wb = world_bounds(box_scene(1))
    np.testing.assert_allclose(wb.lo, [-0.5, -0.5, -0.5])
    np.testing.assert_allclose(wb.hi, [0.5, 0.5, 0.5])


def test_world_bounds_translation_equivariance():
    scene = box_scene(1)
    moved = dataclasses.replace(
        scene, nodes=(dataclasses.replace(
            scene.nodes[0], transform=Transform.from_translation([10, 0, 0])),))
    wb = world_bounds(moved)
    np.testing.assert_allclose(wb.lo, [9.5, -0.5, -0.5])
    np.testing.assert_allclose(wb.hi, [10.5, 0.5, 0.5])


def test_world_bounds_contains_rotated_corners():
    rng = np.random.default_rng(5)
    scene = box_scene(1)
    for _ in range(50):
        q = quat_from_axis_angle(rng.normal(size=3), rng.uniform(0, 3))
        t = Transform(rng.uniform(-5, 5, 3), q, rng.uniform(0.2, 2, 3))
        moved = dataclasses.replace(
            scene, nodes=(dataclasses.replace(scene.nodes[0], transform=t),))
        wb = world_bounds(moved)
        mesh = scene.meshes["box"]
        corners = t.apply_points(mesh.local_bounds.corners())
        assert np.all(corners >= wb.lo - 1e-9)
        assert np.all(corners <= wb.hi + 1e-9)
