"""HTTP session service: commands, event stream, logging, replay."""
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

import voxground.service as svc


@pytest.fixture()
def session():
    return svc.Session("t", seed=11)


@pytest.fixture()
def client():
    return TestClient(svc.create_app(seed=11))


def novel_descriptor(seed=5):
    import voxground.interaction as ia
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(ia.GESTURE_DIM)
    return (v / np.linalg.norm(v)).tolist()


def test_default_scene_objects_grounded():
    state = svc.default_scene()
    assert set(state.objects) == {"plate1", "block1", "book1", "cup1"}
    for obj in state.objects.values():
        assert abs(float(obj.aabb()[0][1])) <= 0.002


def test_slide_mutates_scene_and_emits_diffs(session):
    before = session.final_hash()
    out = session.handle_utterance("slide the plate to the block")
    assert out["ok"]
    assert session.final_hash() != before
    diffs = [e for e in session.events if e.kind == "sceneDiff"]
    assert diffs


def test_malformed_utterance_does_not_mutate(session):
    before = session.final_hash()
    out = session.handle_utterance("flurble the wug")
    assert session.final_hash() == before
    assert not any(e.kind == "sceneDiff" for e in session.events)


def test_sequence_numbers_monotone(session):
    session.handle_pointing("plate1")
    session.handle_utterance("slide the plate to the block")
    seqs = [entry["seq"] for entry in session.log]
    assert seqs == list(range(1, len(seqs) + 1))


def test_replay_reproduces_hash(session):
    session.handle_pointing("plate1")
    session.handle_utterance("slide the plate to the block")
    session.handle_utterance("slide the cup to the plate")
    replayed = svc.replay_session(session.log, seed=11)
    assert replayed.final_hash() == session.final_hash()


def test_replay_empty_log_is_identity():
    fresh = svc.Session("a", seed=11)
    replayed = svc.replay_session([], seed=11)
    assert replayed.final_hash() == fresh.final_hash()


def test_replay_rejects_gapped_log(session):
    session.handle_pointing("plate1")
    session.handle_utterance("slide the plate to the block")
    log = [e for e in session.log if e["seq"] != 2]
    with pytest.raises(svc.CorruptLog):
        svc.replay_session(log, seed=11)


def test_events_since_filters(session):
    session.handle_pointing("plate1")
    n = session.events[-1].seq
    session.handle_utterance("slide the plate to the block")
    later = session.events_since(n)
    assert later and all(e.seq > n for e in later)


def test_http_scene_and_log(client):
    r = client.get("/api/scene")
    assert r.status_code == 200
    body = r.json()
    assert {"scene", "hash", "focus", "state"} <= set(body)
    assert client.get("/api/log").json()["log"] == []


def test_http_bad_requests_rejected(client):
    assert client.post("/api/utterance", json={}).status_code == 400
    assert client.post("/api/point", json={}).status_code == 400
    assert client.post("/api/feedback", json={}).status_code == 400
    assert client.post("/api/gesture", json={}).status_code == 400


def test_http_unknown_object_point(client):
    out = client.post("/api/point", json={"objectId": "ghost"}).json()
    assert out["ok"] is False


def test_http_plate_dialogue_reaches_bound(client):
    # point -> claw-down -> reject beneath -> accept side -> novel gesture
    assert client.post("/api/point", json={"objectId": "plate1"}).json()["ok"]
    out = client.post("/api/gesture", json={"name": "claw down"}).json()
    assert out["state"] == "ProposePose"
    out = client.post("/api/feedback", json={"polarity": "negative"}).json()
    assert out["state"] == "ProposePose"
    out = client.post("/api/feedback", json={"polarity": "positive"}).json()
    assert out["state"] == "AwaitGesture"
    out = client.post("/api/gesture",
                      json={"name": "flat hand",
                            "descriptor": novel_descriptor()}).json()
    assert out["state"] == "Bound"
    # the learned side grasp rides along on later commands
    out = client.post("/api/utterance",
                      json={"text": "slide the plate to the block"}).json()
    assert out["ok"]
    stream = client.get("/api/events?since=0")
    payloads = [json.loads(line[len("data: "):])
                for line in stream.text.splitlines()
                if line.startswith("data: ")]
    grasp = [p for p in payloads if p["kind"] == "sceneDiff"
             and p["payload"]["diff"].get("grasp") == "plate1"]
    assert grasp and grasp[0]["payload"]["diff"]["pose"] == "side+X"


def test_http_event_stream_backlog_monotone(client):
    client.post("/api/point", json={"objectId": "cup1"})
    client.post("/api/utterance", json={"text": "slide the cup to the block"})
    stream = client.get("/api/events?since=0")
    ids = [int(line[4:]) for line in stream.text.splitlines()
           if line.startswith("id: ")]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)
    # resuming mid-stream yields exactly the tail
    mid = ids[len(ids) // 2]
    tail = client.get(f"/api/events?since={mid}")
    tail_ids = [int(line[4:]) for line in tail.text.splitlines()
                if line.startswith("id: ")]
    assert tail_ids == [i for i in ids if i > mid]


def test_http_log_replay_round_trip(client):
    client.post("/api/point", json={"objectId": "plate1"})
    client.post("/api/utterance", json={"text": "slide the plate to the block"})
    log = client.get("/api/log").json()["log"]
    live_hash = client.get("/api/scene").json()["hash"]
    replayed = svc.replay_session(log, seed=11)
    assert replayed.final_hash() == live_hash


def test_http_constraints_cached(client):
    a = client.get("/api/constraints").json()
    b = client.get("/api/constraints").json()
    assert a == b
    assert a["report"]["accepted"]
    assert "voxml" in a


def test_http_voxemes_listing(client):
    names = {v["name"] for v in client.get("/api/voxemes").json()["voxemes"]}
    assert {"cup", "plate", "block", "SLIDE_TO"} <= names
