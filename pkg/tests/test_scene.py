"""Geometry, support bookkeeping, and grasp inference."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import voxground.scene as sc

finite = st.floats(min_value=-1.0, max_value=1.0,
                   allow_nan=False, allow_infinity=False)


def make_scene():
    state = sc.SceneState(library=sc.seed_library())
    state.add(sc.make_object("plate1", "plate", (0.0, 0.012, 0.0)))
    state.add(sc.make_object("block1", "block", (0.0, 0.049, 0.0)))
    state.recompute_support()
    return state


def test_supporter_tracking():
    state = make_scene()
    assert state.supporter_of("block1") == "plate1"
    assert "block1" in state.supported_by("plate1")


def test_translate_moves_supported_objects_identically():
    state = make_scene()
    before = state.objects["block1"].position.copy()
    sc.translate(state, "plate1", (0.1, 0.0, 0.05))
    delta = state.objects["block1"].position - before
    assert np.allclose(delta, [0.1, 0.0, 0.05], atol=1e-9)
    assert state.supporter_of("block1") == "plate1"


def test_save_load_round_trip(tmp_path):
    state = make_scene()
    path = tmp_path / "scene.json"
    state.save(str(path))
    loaded = sc.SceneState.load(str(path))
    assert loaded.to_json() == state.to_json()


def test_collision_rejected_on_add():
    state = make_scene()
    with pytest.raises(sc.CollisionError):
        state.add(sc.make_object("plate2", "plate", (0.0, 0.012, 0.0)))


@given(st.lists(finite, min_size=3, max_size=3),
       st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_quat_rotation_preserves_norm(v, angle):
    q = sc.quat_from_axis_angle((0.0, 1.0, 0.0), angle)
    out = sc.quat_rotate(q, np.asarray(v))
    assert np.isclose(np.linalg.norm(out), np.linalg.norm(v), atol=1e-9)


@given(st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_quat_conjugate_inverts(angle):
    q = sc.quat_from_axis_angle((1.0, 0.0, 0.0), angle)
    v = np.array([0.3, -0.2, 0.7])
    back = sc.quat_rotate(sc.quat_conjugate(q), sc.quat_rotate(q, v))
    assert np.allclose(back, v, atol=1e-9)


def test_cup_grasp_points_lie_on_surface():
    cup = sc.make_object("cup1", "cup", (0.0, 0.05, 0.0))
    pts = sc.grasp_points(cup)
    assert pts
    for p in pts:
        assert abs(sc.signed_distance(cup, p)) <= 1e-6
    # mid-height circle plus the axial extremes
    ys = sorted({round(float(p[1]), 6) for p in pts})
    assert 0.05 in ys          # mid circle at the centroid height
    assert 0.0 in ys and 0.1 in ys  # bottom and top poles


def test_plate_pose_candidate_order():
    plate = sc.make_object("plate1", "plate", (0.0, 0.012, 0.0))
    labels = [p.label for p in sc.grasp_pose_candidates(plate)]
    assert labels[0] == "beneath"
    assert labels[1:] == ["side+X", "side+Z", "side-X", "side-Z"]


def test_inferred_pose_penetration_free():
    state = make_scene()
    hand = sc.HandModel(wrist=(0.2, 0.1, 0.0))
    for oid in state.objects:
        pose = sc.infer_grasp_pose(state.objects[oid], hand,
                                   library=state.library)
        assert pose is not None
        assert abs(sc.signed_distance(state.objects[oid], pose.target,
                                      library=state.library)) <= 1e-3


def test_touching_predicate():
    a = sc.make_object("a", "block", (0.0, 0.025, 0.0))
    b = sc.make_object("b", "block", (0.0501, 0.025, 0.0))
    c = sc.make_object("c", "block", (0.3, 0.025, 0.0))
    assert sc.touching(a, b)
    assert not sc.touching(a, c)
