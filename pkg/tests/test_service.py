import time

import pytest
from fastapi.testclient import TestClient

from metaphor_forge.backends.errors import HttpStatusError
from metaphor_forge.service import create_app
from tests.conftest import MockStack

COMPLETION = """<reasoning>Hope guides like a beacon.</reasoning>
<source>A lighthouse</source>
<target>Hope</target>
<intended_meaning>Hope guides through dark times.</intended_meaning>
<visual_prompt>A lighthouse beam cutting through a storm at night.</visual_prompt>"""

COMPLETION_B = COMPLETION.replace("storm", "fog")
COMPLETION_C = COMPLETION.replace("storm", "blizzard")


def make_client(stack=None, **kwargs):
    stack = stack or MockStack(seed=0)
    app = create_app(stack.scorer, **kwargs)
    return TestClient(app), stack


def item(completion=COMPLETION, metaphor="Hope is a lighthouse"):
    return {"metaphor_text": metaphor, "completion_raw": completion}


class TestScoreEndpoint:
    def test_single_item(self):
        client, _ = make_client()
        resp = client.post("/v1/score", json={"items": [item()]})
        assert resp.status_code == 200
        result = resp.json()["results"][0]
        assert result["parse_ok"]
        assert result["breakdown"]["format"] == 1.0
        assert result["breakdown"]["length"] == 1.0
        assert result["key"]

    def test_batch_dedup(self):
        client, stack = make_client()
        items = [item(COMPLETION), item(COMPLETION_B), item(COMPLETION),
                 item(COMPLETION_C)]
        resp = client.post("/v1/score", json={"items": items})
        digests = [r["key"] for r in resp.json()["results"]]
        assert len(set(digests)) == 3
        assert stack.image.calls == 3
        assert digests[0] == digests[2]

    def test_group_advantages(self):
        client, _ = make_client()
        items = [item(COMPLETION), item(COMPLETION_B), item(COMPLETION_C)]
        resp = client.post("/v1/score", json={"items": items,
                                              "group_id": "g1"})
        body = resp.json()
        advantages = body["advantages"]
        totals = [r["breakdown"]["total"] for r in body["results"]]
        mean = sum(totals) / len(totals)
        assert advantages == pytest.approx([t - mean for t in totals])
        assert abs(sum(advantages)) < 1e-9

    def test_unparsable_completion_scores_zero_components(self):
        client, _ = make_client()
        resp = client.post("/v1/score", json={
            "items": [item(completion="no tags at all")]})
        result = resp.json()["results"][0]
        assert not result["parse_ok"]
        b = result["breakdown"]
        assert b["format"] == 0.0
        assert b["decomposition"] == b["clip"] == b["s_presence"] == 0.0
        assert b["total"] == pytest.approx(0.1 * 0.0 + 0.1 * b["length"])

    def test_unparsable_still_counts_in_group(self):
        client, _ = make_client()
        resp = client.post("/v1/score", json={
            "items": [item(), item(completion="garbage")],
            "group_id": "g"})
        assert len(resp.json()["advantages"]) == 2

    def test_idempotent_resubmission(self):
        client, stack = make_client()
        body = {"items": [item(COMPLETION), item(COMPLETION_B)]}
        first = client.post("/v1/score", json=body).json()
        calls = stack.image.calls
        second = client.post("/v1/score", json=body).json()
        assert first == second
        assert stack.image.calls == calls  # all cache hits

    def test_response_order_matches_request_order(self):
        client, _ = make_client()
        items = [item(COMPLETION_C), item(COMPLETION), item(COMPLETION_B)]
        resp = client.post("/v1/score", json={"items": items}).json()
        resubmitted = client.post("/v1/score", json={
            "items": list(reversed(items))}).json()
        assert [r["key"] for r in resubmitted["results"]] == \
            list(reversed([r["key"] for r in resp["results"]]))

    def test_oversize_batch_413(self):
        client, _ = make_client(max_batch=4)
        resp = client.post("/v1/score", json={"items": [item()] * 5})
        assert resp.status_code == 413

    def test_malformed_body_400(self):
        client, _ = make_client()
        assert client.post("/v1/score", json={"items": []}).status_code == 400
        assert client.post("/v1/score",
                           json={"wrong": True}).status_code == 400

    def test_backend_outage_502_with_partial_results(self):
        stack = MockStack(seed=0)

        class Dead:
            def generate_image(self, prompt, params):
                raise HttpStatusError(503, "image backend down")

        # Score one item first so it is cached, then kill the backend.
        client, _ = make_client(stack)
        client.post("/v1/score", json={"items": [item(COMPLETION)]})
        stack.scorer.image_backend = Dead()
        resp = client.post("/v1/score", json={
            "items": [item(COMPLETION), item(COMPLETION_B)]})
        assert resp.status_code == 502
        results = resp.json()["results"]
        assert results[0]["breakdown"] is not None  # cached, still served
        assert results[1]["breakdown"] is None
        assert "down" in results[1]["error"]

    def test_weights_override(self):
        client, _ = make_client()
        resp = client.post("/v1/score", json={
            "items": [item()],
            "weights_override": {"w_clip": 0.0, "w_decomposition": 0.0}})
        b = resp.json()["results"][0]["breakdown"]
        expected = 0.1 * (b["s_presence"] + b["t_presence"] + b["m_align"]
                          + b["bert_s"] + b["bert_t"] + b["bert_m"]
                          + b["format"] + b["length"])
        assert b["total"] == pytest.approx(expected)

    def test_auth_token_enforced(self):
        client, _ = make_client(auth_token="hunter2")
        denied = client.post("/v1/score", json={"items": [item()]})
        assert denied.status_code == 401
        allowed = client.post("/v1/score", json={"items": [item()]},
                              headers={"Authorization": "Bearer hunter2"})
        assert allowed.status_code == 200


class TestHealthEndpoint:
    def test_all_up(self):
        client, _ = make_client(probes={"llm": lambda: True,
                                        "image": lambda: True})
        body = client.get("/v1/health").json()
        assert body["status"] == "ok"
        assert body["backends"] == {"llm": True, "image": True}

    def test_one_down_degrades(self):
        client, _ = make_client(probes={"llm": lambda: True,
                                        "image": lambda: False})
        body = client.get("/v1/health").json()
        assert body["status"] == "degraded"
        assert body["backends"]["image"] is False

    def test_probe_exception_counts_as_down(self):
        def boom():
            raise ConnectionError("nope")

        client, _ = make_client(probes={"vlm": boom})
        assert client.get("/v1/health").json()["status"] == "degraded"

    def test_probes_cached_five_seconds(self):
        calls = []

        def probe():
            calls.append(time.monotonic())
            return True

        client, _ = make_client(probes={"llm": probe})
        client.get("/v1/health")
        client.get("/v1/health")
        assert len(calls) == 1
