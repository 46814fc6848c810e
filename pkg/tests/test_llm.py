import json

import httpx
import numpy as np
import pytest

from snow.agents.extraction import extract, plain
from snow.agents.specs import reference_specs
from snow.llm import (
    Cassette, CassetteMissError, ChatRequest, LiveBackend, LLMClient, LLMError, MockBackend,
    NetworkDisabledError, RateLimiter, ReplayBackend, SchemaError, SchemaRegistry, SchemaRegistryError,
    TransportError, default_registry, normalize_prompt, request_key,
)
from snow.synth import mock_rules

def spec_for(fid):
    spec = next(s for s in reference_specs() if s.name == fid)
    spec.status = "extracting"
    return spec


SCHEMA = {"type": "object", "required": ["answer"], "properties": {"answer": {"type": "integer"}}}


class Scripted:
    """Backend replying with a fixed list of raw texts."""

    kind = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.seen = []

    def complete(self, req, messages):
        self.seen.append(messages)
        return self.replies.pop(0)


def _req(**kw):
    base = dict(role_tag="extraction", system_text="sys", user_text="user", response_schema_id="t")
    base.update(kw)
    return ChatRequest(**base)


def _client(replies, **kw):
    reg = SchemaRegistry()
    reg.register("t", SCHEMA)
    backend = Scripted(replies)
    return LLMClient(backend, reg, **kw), backend


def test_schema_validation_active():
    client, _ = _client(['{"answer": 3}'])
    assert client.complete_structured(_req()) == {"answer": 3}


def test_duplicate_registration():
    reg = SchemaRegistry()
    reg.register("t", SCHEMA)
    with pytest.raises(SchemaRegistryError):
        reg.register("t", SCHEMA)


def test_unknown_schema():
    client, _ = _client([])
    with pytest.raises(LLMError):
        client.complete_structured(_req(response_schema_id="nope"))


def test_repair_then_success():
    client, backend = _client(['{"wrong": 1}', '{"answer": 2}'])
    assert client.complete_structured(_req()) == {"answer": 2}
    assert client.repairs == 1
    # the second turn carries the validator complaint
    assert "did not match" in backend.seen[1][-1]["content"]


def test_schema_error_after_repairs():
    client, _ = _client(["not json"] * 4, max_repairs=3)
    with pytest.raises(SchemaError) as ei:
        client.complete_structured(_req())
    assert ei.value.last_raw == "not json"


def test_normalize_keeps_note_bytes():
    text = "a   b\n\n c <note>x  \n  y</note>  d"
    assert normalize_prompt(text) == "a b c <note>x  \n  y</note> d"


def test_request_key_ignores_outer_whitespace():
    r = _req()
    a = request_key(r, [{"role": "user", "content": "hello   world"}])
    b = request_key(r, [{"role": "user", "content": "hello world"}])
    c = request_key(r, [{"role": "user", "content": "<note>hello   world</note>"}])
    assert a == b != c
    assert request_key(_req(seed=1), [{"role": "user", "content": "hello world"}]) != a


def _ok_transport(content='{"answer": 5}', calls=None, fail_first=0):
    state = {"n": 0}

    def handler(request):
        state["n"] += 1
        if calls is not None:
            calls.append(json.loads(request.content))
        if state["n"] <= fail_first:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})

    return httpx.MockTransport(handler), state


def test_live_backend_records_and_replay_is_identical(tmp_path):
    cas = Cassette(tmp_path / "c.jsonl")
    transport, state = _ok_transport()
    live = LiveBackend("http://example.invalid/v1", "m", api_key="k", cassette=cas, transport=transport,
                       requests_per_minute=6000)
    reg = SchemaRegistry()
    reg.register("t", SCHEMA)
    first = LLMClient(live, reg).complete_structured(_req())
    replay = ReplayBackend(tmp_path / "c.jsonl")
    again = LLMClient(replay, reg).complete_structured(_req())
    assert first == again == {"answer": 5}
    assert state["n"] == 1


def test_replay_miss_names_hash(tmp_path):
    (tmp_path / "c.jsonl").write_text("", encoding="utf-8")
    reg = SchemaRegistry()
    reg.register("t", SCHEMA)
    with pytest.raises(CassetteMissError) as ei:
        LLMClient(ReplayBackend(tmp_path / "c.jsonl"), reg).complete_structured(_req())
    assert ei.value.key in str(ei.value)


def test_transport_retries_with_backoff():
    transport, state = _ok_transport(fail_first=2)
    sleeps = []
    live = LiveBackend("http://x/v1", "m", api_key="k", transport=transport, requests_per_minute=6000,
                       sleep=sleeps.append)
    assert live.complete(_req(), [{"role": "user", "content": "q"}]) == '{"answer": 5}'
    assert state["n"] == 3
    assert [s for s in sleeps if s >= 1.0] == [1.0, 2.0]


def test_transport_error_after_three_tries():
    transport, state = _ok_transport(fail_first=99)
    live = LiveBackend("http://x/v1", "m", api_key="k", transport=transport, requests_per_minute=6000,
                       sleep=lambda s: None)
    with pytest.raises(TransportError):
        live.complete(_req(), [{"role": "user", "content": "q"}])
    assert state["n"] == 3


def test_payload_is_openai_style():
    calls = []
    transport, _ = _ok_transport(calls=calls)
    live = LiveBackend("http://x/v1", "my-model", api_key="k", transport=transport, requests_per_minute=6000)
    live.complete(_req(seed=4), [{"role": "user", "content": "q"}])
    assert calls[0]["model"] == "my-model" and calls[0]["seed"] == 4 and calls[0]["temperature"] == 0.0


def test_network_guard():
    live = LiveBackend("http://x/v1", "m", api_key="k")
    with pytest.raises(NetworkDisabledError):
        live.complete(_req(), [{"role": "user", "content": "q"}])


def test_rate_limiter_waits():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    rl = RateLimiter(60, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        rl.acquire()
    assert sum(slept) == pytest.approx(2.0)


def test_mock_extraction_equals_truth(cohort):
    client = LLMClient(mock_rules(cohort.manifest))
    spec = spec_for("tumor_percentage")
    p = cohort.patients[5]
    note = next(n for n in p.notes if n.kind == "biopsy_report")
    got = plain({note.note_id: {fv.subgroup: fv for fv in extract(client, note, spec).values}})[note.note_id]
    assert got == cohort.manifest.note_truth(note.note_id, "tumor_percentage")


def test_mock_is_deterministic(cohort):
    spec = spec_for("gleason_score_sum")
    note = next(n for n in cohort.patients[9].notes if n.kind == "biopsy_report")
    a = [fv.value for fv in extract(LLMClient(mock_rules(cohort.manifest, 0.5, seed=3)), note, spec).values]
    b = [fv.value for fv in extract(LLMClient(mock_rules(cohort.manifest, 0.5, seed=3)), note, spec).values]
    assert a == b


def test_mock_error_rate(cohort):
    eps = 0.2
    backend = mock_rules(cohort.manifest, eps, seed=11)
    client = LLMClient(backend)
    specs = [spec_for(s.name) for s in reference_specs() if not s.aggregated]
    notes = [n for p in cohort.patients for n in p.notes if n.kind == "biopsy_report"]
    n_req = 0
    for spec in specs:
        for note in notes:
            extract(client, note, spec)
            n_req += 1
            if n_req == 1000:
                break
        if n_req == 1000:
            break
    log = backend.responder.log
    assert len(log) == 1000
    k = sum(e["corrupted"] for e in log)
    half = 1.96 * np.sqrt(1000 * eps * (1 - eps))
    assert abs(k - 1000 * eps) <= half


def test_mock_backend_requires_responder():
    with pytest.raises(ValueError):
        MockBackend(None)


def test_default_registry_has_agent_schemas():
    reg = default_registry()
    for sid in ("discovery", "extraction", "validation", "post_process", "aggregation"):
        assert sid in reg
