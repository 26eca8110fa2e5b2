"""Gesture classification and the pose-negotiation dialogue."""
import numpy as np
import pytest

import voxground.interaction as ia
import voxground.scene as sc


def novel_vec(seed=99):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(ia.GESTURE_DIM)
    return v / np.linalg.norm(v)


def desk_state():
    state = sc.SceneState(library=sc.seed_library())
    state.add(sc.make_object("plate1", "plate", (0.0, 0.012, 0.0)))
    state.add(sc.make_object("block1", "block", (0.3, 0.025, 0.0)))
    state.recompute_support()
    return ia.DialogueState(scene=state, library=ia.GestureLibrary())


def test_seed_centroids_separated():
    lib = ia.GestureLibrary()
    names = list(lib.centroids)
    assert set(names) == set(ia.SEED_GESTURE_NAMES)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            cos = float(np.dot(lib.centroids[a], lib.centroids[b]))
            assert abs(cos) <= 1 - ia._SEED_SEPARATION + 1e-9


def test_seed_gestures_classify_to_themselves():
    lib = ia.GestureLibrary()
    for name in ia.SEED_GESTURE_NAMES:
        d = ia.GestureDescriptor(lib.centroids[name], name=None)
        assert ia.classify_gesture(d, lib) == name


def test_novel_gesture_detected():
    lib = ia.GestureLibrary()
    assert ia.classify_gesture(ia.GestureDescriptor(novel_vec()), lib) == ia.NOVEL


def test_library_save_load_round_trip(tmp_path):
    lib = ia.GestureLibrary()
    lib.register("flat hand", ia.GestureDescriptor(novel_vec()))
    path = tmp_path / "gestures.json"
    lib.save(str(path))
    loaded = ia.GestureLibrary.load(str(path))
    assert set(loaded.centroids) == set(lib.centroids)
    d = ia.GestureDescriptor(novel_vec())
    assert ia.classify_gesture(d, loaded) == "flat hand"


def run_to_await(ds):
    ia.step(ds, ia.Pointing("plate1"))
    lib = ia.GestureLibrary()
    ia.step(ds, ia.GestureDescriptor(lib.centroids["claw down"]))
    ia.step(ds, "no")          # reject beneath
    ia.step(ds, "yes")         # accept side+X
    return ds


def test_plate_proposal_order_beneath_then_side():
    ds = desk_state()
    ia.step(ds, ia.Pointing("plate1"))
    assert ds.state == ia.OBJECT_FOCUS and ds.focus == "plate1"
    lib = ia.GestureLibrary()
    ia.step(ds, ia.GestureDescriptor(lib.centroids["claw down"]))
    assert ds.state == ia.PROPOSE_POSE
    assert ds.current_pose().label == "beneath"
    ia.step(ds, "no")
    assert ds.current_pose().label == "side+X"


def test_exhausting_candidates_resets():
    ds = desk_state()
    ia.step(ds, ia.Pointing("plate1"))
    lib = ia.GestureLibrary()
    ia.step(ds, ia.GestureDescriptor(lib.centroids["claw down"]))
    with pytest.raises(ia.NoMoreCandidates):
        for _ in range(10):
            ia.step(ds, "no")
    assert ds.state == ia.OBJECT_FOCUS


def test_bind_requires_novel_gesture():
    ds = run_to_await(desk_state())
    assert ds.state == ia.AWAIT_GESTURE
    lib = ia.GestureLibrary()
    with pytest.raises(ia.NotNovel):
        ia.bind_gesture(ds, ia.GestureDescriptor(lib.centroids["wave"]))


def test_bind_and_idempotent_rebind():
    ds = run_to_await(desk_state())
    vec = novel_vec(5)
    sem = ia.bind_gesture(ds, ia.GestureDescriptor(vec, name="flat hand"))
    assert ds.state == ia.BOUND
    assert ds.bindings["plate1"] == "side+X"
    assert sem.bound
    # re-presenting the same (now learned) gesture in a fresh negotiation
    # changes nothing
    ds.state = ia.AWAIT_GESTURE
    again = ia.bind_gesture(ds, ia.GestureDescriptor(vec, name="flat hand"))
    assert again is sem


def test_bound_pose_propagates_to_grasp_subevents():
    ds = run_to_await(desk_state())
    ia.bind_gesture(ds, ia.GestureDescriptor(novel_vec(5), name="flat hand"))
    trace, _ = ia.execute_with_bindings(ds, "slide the plate to the block",
                                        seed=3)
    assert trace.completed
    grasp_diffs = [t.diff for t in trace.ticks
                   if t.diff and t.diff.get("grasp") == "plate1"]
    assert grasp_diffs and grasp_diffs[0]["pose"] == "side+X"


def test_transcript_logged():
    ds = run_to_await(desk_state())
    replies = [entry["reply"] for entry in ds.transcript]
    assert any("beneath" in r for r in replies)
    assert any("side+X" in r for r in replies)
