"""Qualitative spatial relations: extraction, placement, composition."""
import numpy as np
import pytest

import voxground.learner as lr
import voxground.qsr as qsr
import voxground.scene as sc


def fresh_scene(extra=()):
    state = sc.SceneState(library=sc.seed_library())
    state.add(sc.make_object("anchor", "block", (0.0, 0.025, 0.0)))
    for oid, pos in extra:
        state.add(sc.make_object(oid, "block", pos))
    state.recompute_support()
    return state


@pytest.mark.parametrize("rel", qsr.RELATIONS)
def test_round_trip_every_relation_100_scenes(rel):
    ok = 0
    for seed in range(100):
        state = fresh_scene()
        state.add(sc.make_object(
            "mover", "block", (10.0, 0.025, 10.0)))
        qsr.operationalize(("mover", rel, "anchor"), state, seed=seed)
        g = qsr.extract_relations(state)
        assert ("mover", rel, "anchor") in g.edges()
        ok += 1
    assert ok == 100


def test_on_placement_centered_with_jitter():
    for seed in range(20):
        state = fresh_scene()
        state.add(sc.make_object("mover", "block", (10.0, 0.025, 10.0)))
        qsr.operationalize(("mover", "on", "anchor"), state, seed=seed)
        m = state.objects["mover"].position
        a = state.objects["anchor"].position
        assert abs(m[0] - a[0]) <= 0.05 and abs(m[2] - a[2]) <= 0.05
        assert m[1] > a[1]


def test_crowded_side_found_farther_or_no_placement():
    # anchor's left flank is walled off at touch range
    extra = [(f"w{i}", (-0.051, 0.025, (i - 2) * 0.051)) for i in range(5)]
    state = fresh_scene(extra)
    state.add(sc.make_object("mover", "block", (10.0, 0.025, 10.0)))
    try:
        qsr.operationalize(("mover", "left", "anchor"), state, seed=0)
    except qsr.NoPlacement:
        return
    g = qsr.extract_relations(state)
    assert ("mover", "left", "anchor") in g.edges()


def test_inverse_pairs_extracted_together():
    state = fresh_scene([("b", (0.12, 0.025, 0.0))])
    g = qsr.extract_relations(state)
    for (i, rel, j) in g.edges():
        assert (j, qsr.INVERSE[rel], i) in g.edges()


def test_contradiction_detected():
    g = qsr.RelationGraph()
    g.add("a", "left", "b")
    g.add("a", "right", "b")
    with pytest.raises(qsr.Inconsistent):
        qsr.check_consistency(g)


def test_closure_idempotent_and_consistent_on_staircases():
    rng = np.random.default_rng(0)
    for direction in (1, -1):
        for _ in range(5):
            state = lr.build_staircase_scene(direction, 0.1, rng)
            g = qsr.extract_relations(state)
            closed = qsr.compose_closure(g)
            qsr.check_consistency(closed)
            again = qsr.compose_closure(closed)
            assert set(again.edges()) == set(closed.edges())


def test_graph_serialize_round_trip():
    state = fresh_scene([("b", (0.12, 0.025, 0.0))])
    g = qsr.extract_relations(state)
    h = qsr.RelationGraph.parse(g.serialize())
    assert set(h.edges()) == set(g.edges())
