"""Review service: state transitions, log replay, and the HTTP surface.

The HTTP tests run a real server on an ephemeral port and drive it with
requests; the traversal test uses http.client so the raw path reaches the
server unnormalized.
"""

from __future__ import annotations

import http.client
import json
import threading
from contextlib import contextmanager

import numpy as np
import pytest
import requests

from mdboost import datasets, imaging, review
from mdboost.errors import ValidationError


def make_manifest(n=5, path="synthetic"):
    records = [
        datasets.SampleRecord(id=f"r-{i}", path=path, label=1, source="s")
        for i in range(n)
    ]
    return datasets.Manifest(records=records)


@contextmanager
def running_server(manifest, tmp_path, **kw):
    server = review.make_server(manifest, tmp_path / "decisions.jsonl", port=0, **kw)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_port}"
    finally:
        server.shutdown()
        server.state.close()
        server.server_close()
        thread.join(timeout=5)


# --- state --------------------------------------------------------------------


def test_pending_lists_undecided_in_manifest_order(tmp_path):
    state = review.ReviewState(make_manifest(), tmp_path / "log.jsonl")
    try:
        assert [p["id"] for p in state.pending()] == [f"r-{i}" for i in range(5)]
        assert [p["id"] for p in state.pending(limit=2)] == ["r-0", "r-1"]
        state.decide("r-1", "keep", "me")
        assert [p["id"] for p in state.pending()] == ["r-0", "r-2", "r-3", "r-4"]
    finally:
        state.close()


def test_decide_validates_and_counts(tmp_path):
    state = review.ReviewState(make_manifest(), tmp_path / "log.jsonl")
    try:
        assert state.decide("r-0", "keep", "a") == 1
        assert state.decide("r-1", "drop", "a") == 2
        # Re-deciding the same record does not inflate the count.
        assert state.decide("r-0", "drop", "b") == 2
        with pytest.raises(ValidationError):
            state.decide("r-2", "maybe", "a")
        with pytest.raises(KeyError):
            state.decide("ghost", "keep", "a")
    finally:
        state.close()


def test_progress_counts_kept_and_dropped(tmp_path):
    state = review.ReviewState(make_manifest(), tmp_path / "log.jsonl")
    try:
        state.decide("r-0", "keep", "a")
        state.decide("r-1", "drop", "a")
        state.decide("r-2", "drop", "a")
        assert state.progress() == {"total": 5, "decided": 3, "kept": 1, "dropped": 2}
    finally:
        state.close()


def test_preseeded_review_meta_counts_as_decided(tmp_path):
    manifest = make_manifest()
    manifest.records[0].meta["review"] = "keep"
    state = review.ReviewState(manifest, tmp_path / "log.jsonl")
    try:
        assert state.progress()["decided"] == 1
        assert [p["id"] for p in state.pending()] == ["r-1", "r-2", "r-3", "r-4"]
    finally:
        state.close()


def test_decided_manifest_folds_in_verdicts_without_mutating_input(tmp_path):
    manifest = make_manifest()
    state = review.ReviewState(manifest, tmp_path / "log.jsonl")
    try:
        state.decide("r-0", "keep", "a")
        state.decide("r-3", "drop", "a")
        decided = state.decided_manifest()
        reviews = {r.id: r.meta.get("review") for r in decided.records}
        assert reviews == {
            "r-0": "keep", "r-1": None, "r-2": None, "r-3": "drop", "r-4": None,
        }
        assert all("review" not in r.meta for r in manifest.records)
    finally:
        state.close()


def test_state_restarts_from_its_own_log(tmp_path):
    log = tmp_path / "log.jsonl"
    state = review.ReviewState(make_manifest(), log)
    state.decide("r-0", "keep", "a")
    state.decide("r-1", "drop", "a")
    state.decide("r-0", "drop", "b")
    state.close()

    resumed = review.ReviewState(make_manifest(), log)
    try:
        assert resumed.decisions == {"r-0": "drop", "r-1": "drop"}
        assert resumed.progress()["decided"] == 2
        assert [p["id"] for p in resumed.pending()] == ["r-2", "r-3", "r-4"]
    finally:
        resumed.close()


def test_log_decisions_for_filtered_out_ids_are_ignored(tmp_path):
    log = tmp_path / "log.jsonl"
    state = review.ReviewState(make_manifest(5), log)
    state.decide("r-4", "drop", "a")
    state.close()
    smaller = review.ReviewState(make_manifest(3), log)
    try:
        assert smaller.decisions == {}
    finally:
        smaller.close()


# --- log replay ----------------------------------------------------------------


def decision(record_id, verdict):
    return review.ReviewDecision(
        record_id=record_id, verdict=verdict, annotator="", timestamp=""
    )


def test_replay_last_verdict_wins_and_unknown_ids_ignored():
    manifest = make_manifest(3)
    out = review.replay_decisions(
        manifest,
        [decision("r-0", "keep"), decision("r-0", "drop"), decision("ghost", "keep")],
    )
    assert out.records[0].meta["review"] == "drop"
    assert "review" not in out.records[1].meta
    assert "review" not in manifest.records[0].meta


def test_replay_is_idempotent():
    manifest = make_manifest(3)
    decisions = [decision("r-0", "keep"), decision("r-2", "drop")]
    once = review.replay_decisions(manifest, decisions)
    twice = review.replay_decisions(once, decisions)
    assert once.records == twice.records


def test_replay_of_saved_log_reproduces_state(tmp_path):
    log = tmp_path / "log.jsonl"
    manifest = make_manifest()
    state = review.ReviewState(manifest, log)
    state.decide("r-2", "keep", "a")
    state.decide("r-4", "drop", "a")
    expected = state.decided_manifest()
    state.close()
    replayed = review.replay_decisions(manifest, review.load_decision_log(log))
    assert replayed.records == expected.records


def test_load_decision_log_missing_file_is_empty(tmp_path):
    assert review.load_decision_log(tmp_path / "absent.jsonl") == []


def test_decision_from_obj_rejects_bad_verdicts():
    with pytest.raises(ValidationError):
        review.decision_from_obj({"id": "x", "verdict": "shrug"})


# --- HTTP surface ----------------------------------------------------------------


def test_http_pending_and_limit(tmp_path):
    with running_server(make_manifest(), tmp_path) as (server, base):
        got = requests.get(f"{base}/api/pending").json()
        assert [p["id"] for p in got] == [f"r-{i}" for i in range(5)]
        assert set(got[0]) == {"id", "path", "meta"}
        limited = requests.get(f"{base}/api/pending", params={"limit": 2}).json()
        assert len(limited) == 2
        bad = requests.get(f"{base}/api/pending", params={"limit": "many"})
        assert bad.status_code == 400


def test_http_decision_flow(tmp_path):
    with running_server(make_manifest(), tmp_path) as (server, base):
        r = requests.post(
            f"{base}/api/decision",
            json={"id": "r-0", "verdict": "keep", "annotator": "tester"},
        )
        assert r.status_code == 200
        assert r.json() == {"accepted": True, "decided_count": 1}

        assert requests.post(
            f"{base}/api/decision", json={"id": "ghost", "verdict": "keep"}
        ).status_code == 404
        assert requests.post(
            f"{base}/api/decision", json={"id": "r-1", "verdict": "shrug"}
        ).status_code == 400
        assert requests.post(
            f"{base}/api/decision", json={"verdict": "keep"}
        ).status_code == 400
        assert requests.post(
            f"{base}/api/decision", data=b"not json"
        ).status_code == 400

        progress = requests.get(f"{base}/api/progress").json()
        assert progress == {"total": 5, "decided": 1, "kept": 1, "dropped": 0}


def test_http_decisions_hit_the_log_immediately(tmp_path):
    with running_server(make_manifest(), tmp_path) as (server, base):
        requests.post(f"{base}/api/decision", json={"id": "r-0", "verdict": "drop"})
        lines = (tmp_path / "decisions.jsonl").read_text().splitlines()
        assert len(lines) == 1
        obj = json.loads(lines[0])
        assert (obj["id"], obj["verdict"]) == ("r-0", "drop")
        assert obj["timestamp"]


def test_http_image_endpoint(tmp_path):
    image_root = tmp_path / "images"
    image_root.mkdir()
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    imaging.save_image(imaging.image_from_array(px), image_root / "a.png")
    records = [
        datasets.SampleRecord(id="img-0", path="a.png", label=1, source="s"),
        datasets.SampleRecord(id="img-1", path="b.png", label=1, source="s"),
        datasets.SampleRecord(id="syn-0", path="synthetic", label=1, source="s"),
    ]
    manifest = datasets.Manifest(records=records)
    with running_server(manifest, tmp_path, image_root=image_root) as (server, base):
        ok = requests.get(f"{base}/api/image/img-0")
        assert ok.status_code == 200
        assert ok.headers["Content-Type"] == "image/png"
        assert ok.content == (image_root / "a.png").read_bytes()
        assert requests.get(f"{base}/api/image/img-1").status_code == 404
        assert requests.get(f"{base}/api/image/syn-0").status_code == 404
        assert requests.get(f"{base}/api/image/ghost").status_code == 404


def test_http_image_404_without_image_root(tmp_path):
    with running_server(make_manifest(), tmp_path) as (server, base):
        assert requests.get(f"{base}/api/image/r-0").status_code == 404


def test_http_placeholder_page_without_static_dir(tmp_path):
    with running_server(make_manifest(), tmp_path) as (server, base):
        page = requests.get(f"{base}/")
        assert page.status_code == 200
        assert "text/html" in page.headers["Content-Type"]
        assert requests.get(f"{base}/anything.js").status_code == 404
        assert requests.post(f"{base}/api/other", json={}).status_code == 404


def test_http_static_bundle_and_traversal_guard(tmp_path):
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<!doctype html><p>bundle</p>")
    (static / "app.js").write_text("console.log('ok')")
    (tmp_path / "secret.txt").write_text("keep out")
    with running_server(make_manifest(), tmp_path, static_dir=static) as (server, base):
        root = requests.get(f"{base}/")
        assert root.status_code == 200 and "bundle" in root.text
        named = requests.get(f"{base}/index.html")
        assert named.text == root.text
        js = requests.get(f"{base}/app.js")
        assert js.status_code == 200
        assert "text/javascript" in js.headers["Content-Type"]
        assert requests.get(f"{base}/missing.css").status_code == 404

        conn = http.client.HTTPConnection("127.0.0.1", server.server_port)
        try:
            conn.request("GET", "/../secret.txt")
            resp = conn.getresponse()
            assert resp.status == 404
            assert b"keep out" not in resp.read()
        finally:
            conn.close()


def test_http_state_is_shared_with_the_server_object(tmp_path):
    with running_server(make_manifest(), tmp_path) as (server, base):
        requests.post(f"{base}/api/decision", json={"id": "r-0", "verdict": "keep"})
        assert server.state.progress()["decided"] == 1
        decided = server.state.decided_manifest()
        assert decided.records[0].meta["review"] == "keep"
