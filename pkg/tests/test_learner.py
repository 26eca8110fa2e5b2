"""Structure-learning pipeline: exemplars, models, heuristics, scorer."""
import numpy as np
import pytest

import voxground.learner as lr
import voxground.qsr as qsr
import voxground.scene as sc

OBJECTS = [f"b{i}" for i in range(6)]


def test_exemplar_relation_counts(exemplars7):
    assert len(exemplars7) == 17
    for ex in exemplars7:
        n = len(list(ex.graph.edges()))
        assert 18 <= n <= 22, ex.id


def test_exemplar_directions_mixed(exemplars7):
    dirs = {ex.provenance["direction"] for ex in exemplars7}
    assert dirs == {1, -1}


def test_save_load_exemplars(tmp_path, exemplars7):
    lr.save_exemplars(exemplars7, str(tmp_path))
    back = lr.load_exemplars(str(tmp_path))
    assert [ex.id for ex in back] == [ex.id for ex in exemplars7]
    for a, b in zip(back, exemplars7):
        assert set(a.graph.edges()) == set(b.graph.edges())


def test_move_index_round_trip(exemplars7):
    for m in lr.canonical_moves(exemplars7[0].graph):
        assert lr.move_from_index(lr.move_index(m)).triple() == m.triple()


def test_first_move_relation_marginal(models7):
    counts = {}
    for seed in range(1000):
        m = lr.first_move(models7, OBJECTS, seed)
        counts[m.relation] = counts.get(m.relation, 0) + 1
    common = sum(counts.get(r, 0) for r in ("on", "touching", "left", "right"))
    assert common / 1000 >= 0.95, counts


def test_classifier_self_classification(models7, exemplars7):
    hits = 0
    for i, ex in enumerate(exemplars7):
        probs = lr.classify_state(models7, lr.encode_state(ex.graph))
        hits += int(np.argmax(probs)) == i
    assert hits / len(exemplars7) >= 0.9


def test_proposer_restores_deleted_relation(models7, exemplars7):
    rng = np.random.default_rng(0)
    hits = trials = 0
    for ci, ex in enumerate(exemplars7):
        moves = lr.canonical_moves(ex.graph)
        for _ in range(4):
            drop = int(rng.integers(len(moves)))
            g = ex.graph.copy()
            missing = moves[drop]
            g.discard(missing.i, missing.relation, missing.j)
            g.discard(missing.j, qsr.INVERSE[missing.relation], missing.i)
            try:
                options, _ = lr.propose_moves(models7, g, ex.id, k=1)
            except lr.NoLegalMove:
                options = []
            trials += 1
            hits += bool(options) and options[0].triple() in (
                missing.triple(),
                (missing.j, qsr.INVERSE[missing.relation], missing.i))
    assert hits / trials >= 0.8, hits / trials


def test_spire_distance_symmetric(exemplars7):
    g, h = exemplars7[0].graph, exemplars7[1].graph
    assert lr.spire_distance(g, h) == lr.spire_distance(h, g)
    assert lr.spire_distance(g, g) == 0


def test_heuristic_distances_identity(exemplars7):
    g = exemplars7[0].graph
    assert lr.jaccard_distance(g, g) == 0
    assert lr.levenshtein_distance(g, g) == 0
    assert lr.lev_spire_distance(g, g) == 0


def test_rank_moves_unknown_heuristic(exemplars7):
    g = exemplars7[0].graph
    with pytest.raises(lr.LearnerError):
        lr.rank_moves(lr.canonical_moves(g)[:3], g, g, "bogus")


def oracle_on(state):
    return lr.oracle_score(qsr.extract_relations(state), state)


def test_oracle_perfect_staircase_scores_10():
    rng = np.random.default_rng(0)
    state = lr.build_staircase_scene(1, 0.0, rng)
    assert oracle_on(state) == 10.0


def test_oracle_tower_scores_low():
    state = sc.SceneState(library=sc.seed_library())
    for i in range(6):
        state.add(sc.make_object(f"b{i}", "block",
                                 (0.0, 0.025 + 0.05 * i, 0.0)))
    state.recompute_support()
    assert oracle_on(state) <= 3.0


def test_oracle_flat_row_scores_low():
    state = sc.SceneState(library=sc.seed_library())
    for i in range(6):
        state.add(sc.make_object(f"b{i}", "block", (0.06 * i, 0.025, 0.0)))
    state.recompute_support()
    assert oracle_on(state) <= 2.0


def test_single_object_build_trivial(models7, exemplars7):
    r = lr.build_structure(models7, exemplars7, ["b0"], "spire", seed=0)
    assert list(r.scene.objects) == ["b0"]
    assert not list(r.graph.edges())


def test_build_graph_closure_consistent(models7, exemplars7):
    for seed in range(3):
        r = lr.build_structure(models7, exemplars7, OBJECTS, "spire", seed=seed)
        qsr.check_consistency(qsr.compose_closure(r.graph))


def test_spire_quality_over_20_seeds(models7, exemplars7):
    scores = []
    for seed in range(20):
        r = lr.build_structure(models7, exemplars7, OBJECTS, "spire",
                               seed=seed)
        scores.append(lr.oracle_score(r.graph, r.scene))
    assert np.mean([s >= 5 for s in scores]) >= 0.7, scores
