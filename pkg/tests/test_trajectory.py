import json
import random

import pytest

from oracles import rescan_tiers
from pisearch.agent import TimeBudget, parse_final_response, run_query
from pisearch.backends import ControllerConfig, MockBackend
from pisearch.clock import SimulatedClock
from pisearch.controller import SearchSession
from pisearch.policies import ScriptedPolicy, answer_step, tool_step
from pisearch.trajectory import (
    DocumentTiers,
    RunArtifact,
    artifact_from_run,
    config_fingerprint,
    derive_tiers,
    load_run_artifacts,
    parse_artifact,
    read_manifest,
    serialize_artifact,
    write_artifact,
    write_manifest,
)

DOCS = {f"d{i:02d}": f"needle {i} " + "filler " * 5 for i in range(26)}
CONFIG = {"bm25": {"k1": 25.0, "b": 1.0}, "depth": 1000, "policy": "scripted:test"}


def run_script(steps, depth=1000, on_steer="ignore", loop=False, step_seconds=0.0):
    backend = MockBackend(documents=DOCS)
    session = SearchSession(backend, config=ControllerConfig(depth=depth))
    clock = SimulatedClock()
    policy = ScriptedPolicy(
        steps, loop=loop, on_steer=on_steer, step_seconds=step_seconds, clock=clock
    )
    trajectory, final = run_query(
        policy, session, "which needle?", budget=TimeBudget(300), clock=clock, query_id="q1"
    )
    return trajectory, final, clock


GOOD_ANSWER = "Explanation: found [d03] and [ghost].\nExact Answer: three\nConfidence: 70%"


# -- derive_tiers -----------------------------------------------------------------


def test_single_search_tiers():
    trajectory, final, _ = run_script(
        [tool_step("search", query="needle"), answer_step("Explanation: none\nExact Answer: x\nConfidence: 5")]
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    assert len(tiers.surfaced) == 26
    assert len(tiers.previewed) == 5
    assert tiers.opened == frozenset()
    assert tiers.cited == frozenset()
    assert tiers.previewed <= tiers.surfaced


def test_previewed_equals_surfaced_at_depth_5():
    trajectory, final, _ = run_script(
        [tool_step("search", query="needle"), answer_step("Explanation: n\nExact Answer: x\nConfidence: 5")],
        depth=5,
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    assert tiers.previewed == tiers.surfaced
    assert len(tiers.surfaced) == 5


def test_browse_and_read_tiers():
    trajectory, final, _ = run_script(
        [
            tool_step("search", query="needle"),
            tool_step("read_search_results", search_id="s1", offset=6, limit=10),
            tool_step("read_document", docid="d06"),
            answer_step(GOOD_ANSWER),
        ]
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    assert len(tiers.previewed) == 15
    assert tiers.opened == frozenset({"d06"})
    assert tiers.opened <= tiers.previewed
    # Hallucinated citation "[ghost]" filtered; real one kept.
    assert tiers.cited == frozenset({"d03"})


def test_cited_empty_without_final_response():
    trajectory, _, _ = run_script(
        [tool_step("search", query="needle")], loop=True, on_steer="ignore", step_seconds=40.0
    )
    tiers = derive_tiers(trajectory.events, None, DOCS.keys())
    assert tiers.cited == frozenset()
    assert tiers.surfaced  # partial trajectory still yields retrieval tiers


def test_opened_by_direct_id_not_added_to_surfaced():
    trajectory, final, _ = run_script(
        [
            tool_step("read_document", docid="d09"),
            answer_step("Explanation: direct read\nExact Answer: x\nConfidence: 5"),
        ]
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    assert tiers.opened == frozenset({"d09"})
    assert tiers.surfaced == frozenset()


def test_failed_reads_do_not_count_as_opened():
    trajectory, final, _ = run_script(
        [
            tool_step("read_document", docid="zzz"),
            answer_step("Explanation: n\nExact Answer: x\nConfidence: 5"),
        ]
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    assert tiers.opened == frozenset()


def test_tier_derivation_matches_independent_event_scan():
    trajectory, final, clock = run_script(
        [
            tool_step("search", query="needle"),
            tool_step("read_search_results", search_id="s1"),
            tool_step("read_document", docid="d07"),
            answer_step(GOOD_ANSWER),
        ]
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    artifact = artifact_from_run(
        trajectory, final, tiers, CONFIG, started_epoch=0.0, finished_epoch=clock.now()
    )
    payload = artifact.to_dict()
    oracle = rescan_tiers(payload["events"], payload["final_response"], set(DOCS))
    assert payload["tiers"] == oracle


# -- artifacts ---------------------------------------------------------------------


def build_artifact():
    trajectory, final, clock = run_script(
        [
            tool_step("search", query="needle"),
            tool_step("read_document", docid="d03"),
            answer_step(GOOD_ANSWER),
        ],
        step_seconds=1.5,
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    return artifact_from_run(
        trajectory,
        final,
        tiers,
        CONFIG,
        started_epoch=0.0,
        finished_epoch=clock.now(),
        budget=TimeBudget(300),
    )


def test_artifact_roundtrip_equality():
    artifact = build_artifact()
    text = serialize_artifact(artifact)
    parsed = parse_artifact(text)
    assert parsed == artifact
    assert serialize_artifact(parsed) == text


def test_artifact_write_deterministic(tmp_path):
    artifact = build_artifact()
    p1 = write_artifact(artifact, tmp_path / "r1")
    p2 = write_artifact(artifact, tmp_path / "r2")
    assert p1.read_bytes() == p2.read_bytes()


def test_artifact_timestamps_rfc3339():
    payload = build_artifact().to_dict()
    assert payload["started_at"] == "1970-01-01T00:00:00Z"
    assert payload["finished_at"].endswith("Z")


def test_artifact_no_tool_observation_after_steer():
    trajectory, final, clock = run_script(
        [tool_step("search", query="needle")],
        loop=True,
        on_steer="answer",
        step_seconds=50.0,
    )
    tiers = derive_tiers(trajectory.events, final, DOCS.keys())
    artifact = artifact_from_run(
        trajectory, final, tiers, CONFIG, started_epoch=0.0, finished_epoch=clock.now()
    )
    events = artifact.to_dict()["events"]
    steer_idx = next(i for i, ev in enumerate(events) if ev["type"] == "steer")
    for ev in events[steer_idx + 1 :]:
        if ev["type"] == "observation":
            assert ev["ok"] is False


def test_tool_call_counts():
    artifact = build_artifact()
    counts = artifact.tool_call_counts()
    assert counts == {
        "search": 1,
        "read_search_results": 0,
        "read_document": 1,
        "total": 2,
    }


def test_config_fingerprint_stable_and_sensitive():
    base = config_fingerprint({"a": 1, "b": {"c": 2}})
    assert base == config_fingerprint({"b": {"c": 2}, "a": 1})
    assert base != config_fingerprint({"a": 1, "b": {"c": 3}})


# -- manifest ------------------------------------------------------------------------


def test_manifest_lists_written_artifacts(tmp_path):
    run_dir = tmp_path / "run"
    artifact = build_artifact()
    write_artifact(artifact, run_dir)
    write_manifest(run_dir, run_id="t", config=CONFIG, query_ids=["q1"])
    manifest = read_manifest(run_dir)
    assert manifest["query_ids"] == ["q1"]
    assert manifest["incomplete"] is False
    # Directory scan agrees with the manifest.
    loaded = load_run_artifacts(run_dir)
    assert [a.query_id for a in loaded] == manifest["query_ids"]


def test_artifact_filename_quotes_awkward_ids(tmp_path):
    artifact = build_artifact()
    artifact.query_id = "q/with space"
    path = write_artifact(artifact, tmp_path)
    assert path.name == "q%2Fwith%20space.json"
    assert load_run_artifacts(tmp_path)[0].query_id == "q/with space"


# -- randomized property: tiers recomputable from serialized artifacts ----------------


def test_random_trajectories_tier_properties():
    rng = random.Random(1234)
    docids = sorted(DOCS)
    for case in range(60):
        depth = rng.choice([3, 5, 10, 26])
        steps = []
        searches = 0
        for _ in range(rng.randint(1, 6)):
            move = rng.random()
            if move < 0.45 or searches == 0:
                steps.append(tool_step("search", query="needle"))
                searches += 1
            elif move < 0.75:
                sid = f"s{rng.randint(1, max(searches, 1))}"
                steps.append(
                    tool_step(
                        "read_search_results",
                        search_id=sid,
                        offset=rng.randint(1, 6),
                        limit=rng.randint(1, 12),
                    )
                )
            else:
                steps.append(tool_step("read_document", docid=rng.choice(docids)))
        cited = rng.sample(docids, k=rng.randint(0, 3))
        answer = (
            "Explanation: cites "
            + " ".join(f"[{d}]" for d in cited)
            + "\nExact Answer: x\nConfidence: 50"
        )
        steps.append(answer_step(answer))
        trajectory, final, clock = run_script(steps, depth=depth)
        tiers = derive_tiers(trajectory.events, final, DOCS.keys())
        assert tiers.previewed <= tiers.surfaced
        artifact = artifact_from_run(
            trajectory, final, tiers, CONFIG, started_epoch=0.0, finished_epoch=clock.now()
        )
        payload = json.loads(serialize_artifact(artifact))
        assert rescan_tiers(payload["events"], payload["final_response"], set(DOCS)) == payload[
            "tiers"
        ]
        if depth == 5:
            # Page size 5 with depth 5: the initial page shows the whole cache.
            assert tiers.previewed == tiers.surfaced
