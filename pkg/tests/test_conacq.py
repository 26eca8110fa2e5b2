"""Role-constraint acquisition from exemplar pools."""
import pytest

import voxground.conacq as cq
import voxground.learner as lr
import voxground.voxml as vx


def by_str(cs):
    return {str(a.constraint): a.frequency for a in cs.accepted}


def test_mixed_directions_yield_disjunction(exemplars7):
    cs = cq.acquire(exemplars7, threshold=0.9)
    got = by_str(cs)
    assert "left(base, base) or right(base, base)" in got
    assert got["left(base, base) or right(base, base)"] >= 0.9
    assert "left(step, step) or right(step, step)" in got
    # core stacking facts always hold
    assert "on(step, base)" in got
    assert "on(top, step)" in got
    assert "touching(base, base)" in got


def test_single_direction_yields_bare_atom(exemplars7):
    rightward = [ex for ex in exemplars7 if ex.provenance["direction"] == 1]
    assert len(rightward) >= 3
    cs = cq.acquire(rightward, threshold=0.9)
    got = by_str(cs)
    assert "right(base, base)" in got
    assert "left(base, base) or right(base, base)" not in got


def test_threshold_antitone(exemplars7):
    # raising the threshold can only weaken the theory: every constraint
    # accepted at the high threshold is entailed by one accepted at the low
    # threshold (a bare directional atom entails its either-way disjunction)
    lo = cq.acquire(exemplars7, threshold=0.5).constraints()
    hi = cq.acquire(exemplars7, threshold=0.95).constraints()
    lo_disjunct_sets = [set(c.disjuncts) for c in lo]
    for c in hi:
        assert any(d <= set(c.disjuncts) for d in lo_disjunct_sets), str(c)


def test_unsatisfiable_threshold_accepts_nothing(exemplars7):
    cs = cq.acquire(exemplars7, threshold=1.01)
    assert cs.constraints() == []


def test_empty_pool_rejected():
    with pytest.raises(cq.ConacqError):
        cq.acquire([])


def test_role_assignment_partitions(exemplars7):
    roles = cq.roles_from_graph(exemplars7[0].graph)
    base = roles.of_role("base")
    step = roles.of_role("step")
    top = roles.of_role("top")
    assert len(base) == 3 and len(step) == 2 and len(top) == 1
    assert not (set(base) & set(step)) and not (set(step) & set(top))


def test_emitted_voxeme_round_trips(exemplars7):
    cs = cq.acquire(exemplars7, threshold=0.9)
    v = cq.emit_voxml(cs)
    assert v.type_info.head == "assembly"
    text = vx.print_voxeme(v)
    assert "or(left([2]), right([2])" in text
    v2 = vx.parse_voxeme(text)
    assert v2 == v


def test_emitted_habitat_aligns_base(exemplars7):
    cs = cq.acquire(exemplars7, threshold=0.9)
    v = cq.emit_voxml(cs)
    intr = [h for h in v.habitats if h.kind == "intr"]
    assert intr and intr[0].align is not None


def test_report_is_json(exemplars7):
    import json
    cs = cq.acquire(exemplars7, threshold=0.9)
    data = json.loads(cs.report())
    assert set(data) == {"accepted", "rejected"}
    assert data["accepted"]
