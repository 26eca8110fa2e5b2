"""Habitat-affordance embedding and analogical object lookup."""
import numpy as np
import pytest

import voxground.scene as sc
import voxground.transfer as tf

SEED_NAMES = ("block", "book", "bottle-shape", "cup", "knife", "plate", "spoon")


def auc(model, pairs):
    pos = [tf.collocation_probability(model, p) for p in pairs if p.label == 1]
    neg = [tf.collocation_probability(model, p) for p in pairs if p.label == 0]
    wins = sum(p > n for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_pair_dataset_shape(pair_dataset):
    assert all(p.features.shape == (tf.PAIR_DIM,) for p in pair_dataset)
    labels = {p.label for p in pair_dataset}
    assert labels == {0, 1}


def test_untrained_model_refuses(pair_dataset):
    import voxground.neural as nn
    m = tf.EmbeddingModel(arch=tf.MLP7, net=tf._build_net(tf.MLP7, 0))
    with pytest.raises(nn.ModelNotTrained):
        tf.collocation_probability(m, pair_dataset[0])


def test_embedding_separates_pairs(transfer_mlp, transfer_cnn, pair_dataset):
    assert auc(transfer_mlp, pair_dataset) >= 0.99
    assert auc(transfer_cnn, pair_dataset) >= 0.99


def test_describe_habitat_exclusion_sound(transfer_mlp, library):
    # every habitat the description names for an action must really carry
    # that action in some voxeme's affordance structure
    for action in tf.ACTIONS:
        for entry in tf.describe_habitat_for(action, transfer_mlp, library):
            voxeme = library.get(entry["voxeme"])
            carries = {a.event.name for a in voxeme.affordances}
            assert action in carries
            for ans in entry["answers"]:
                assert ans["action"] != action
                assert 0.0 <= ans["probability"] <= 1.0


def test_describe_unknown_action(transfer_mlp, library):
    with pytest.raises(tf.UnknownAction):
        tf.describe_habitat_for("defenestrate", transfer_mlp, library)


def test_self_queries_top1(transfer_mlp, library):
    for name in SEED_NAMES:
        obj = sc.make_object("probe", name, (0.0, 0.05, 0.0))
        analogy = tf.analogical_object(obj, transfer_mlp, library)
        assert analogy.ranking[0][0] == name, (name, analogy.ranking[:3])


def test_unlabeled_bottle_matches_cup(transfer_mlp, transfer_cnn, library):
    # held-out: the bottle geometry is presented without its vocabulary
    # label, so the match must come from shape and habitat evidence
    obj = sc.make_object("mystery", "unknown", (0.0, 0.09, 0.0),
                         extents=(0.03, 0.09, 0.03))
    shape = library.get("bottle-shape").type_info
    for model in (transfer_mlp, transfer_cnn):
        analogy = tf.analogical_object(obj, model, library, shape=shape)
        assert analogy.grasp_like == "cup", analogy.ranking[:3]
        assert analogy.grasp_pose is not None


def test_mlp_cnn_top1_agreement(transfer_mlp, transfer_cnn, library):
    probes = [sc.make_object(f"p{i}", name, (0.0, 0.05, 0.0))
              for i, name in enumerate(SEED_NAMES)] + [
        sc.make_object("p7", "bottle-shape", (0.0, 0.09, 0.0),
                       extents=(0.03, 0.09, 0.03)),
        sc.make_object("p8", "plate", (0.0, 0.012, 0.0),
                       extents=(0.09, 0.01, 0.09)),
    ]
    agree = 0
    for obj in probes:
        a = tf.analogical_object(obj, transfer_mlp, library)
        b = tf.analogical_object(obj, transfer_cnn, library)
        agree += a.ranking[0][0] == b.ranking[0][0]
    assert agree / len(probes) >= 0.8


def test_no_match_below_floor(transfer_mlp, library):
    # a giant degenerate sliver matches nothing in the desk vocabulary
    obj = sc.make_object("weird", "bottle-shape", (0.0, 1.0, 0.0),
                         extents=(2.0, 0.001, 0.5))
    shape = tf.infer_shape(obj)
    try:
        analogy = tf.analogical_object(obj, transfer_mlp, library, shape=shape)
    except tf.NoMatch:
        return
    assert analogy.ranking[0][1] >= 0.4


def test_infer_shape_symmetries():
    cupish = sc.make_object("c", "bottle-shape", (0.0, 0.05, 0.0),
                            extents=(0.035, 0.05, 0.035))
    shape = tf.infer_shape(cupish)
    assert "Y" in shape.rotational_symmetry
    assert shape.head in tf.HEADS
