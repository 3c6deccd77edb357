from __future__ import annotations

import json

import httpx
import pytest

from absa_forge.gateway import (
    Cassette,
    ChatRequest,
    FailingTransport,
    Gateway,
    GatewayConfig,
    GenParams,
    HttpTransport,
    JudgeUnparseable,
    Message,
    RateLimited,
    ReplayMiss,
    RetryPolicy,
    ScriptedTransport,
    TransportError,
    judge_request,
    parse_verdict,
)
from helpers import replay_gateway


def _req(user="hello", **kw) -> ChatRequest:
    return ChatRequest.chat("sys", user, **kw)


def test_fingerprint_is_stable_and_sensitive():
    assert _req().fingerprint == _req().fingerprint
    assert _req().fingerprint != _req("hello!").fingerprint
    assert _req().fingerprint != _req(params=GenParams(temperature=0.5)).fingerprint
    # the tag is bookkeeping and does not change what is sent
    assert _req(tag="a").fingerprint == _req(tag="b").fingerprint


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(())
    with pytest.raises(ValueError):
        Message("robot", "x")
    with pytest.raises(ValueError):
        GenParams(top_p=0)


def test_replay_hit_and_miss():
    gw = replay_gateway({_req().fingerprint: "world"})
    assert gw.complete(_req()) == "world"
    with pytest.raises(ReplayMiss):
        gw.complete(_req("other"))
    assert gw.transport.contacts == 0


def test_replay_mode_needs_no_transport_but_others_do():
    Gateway(Cassette())
    with pytest.raises(ValueError):
        Gateway(Cassette(mode="record"))


def test_record_then_replay(tmp_path):
    path = tmp_path / "c.json"
    transport = ScriptedTransport(lambda r: r.user_text.upper())
    with Gateway(Cassette.load(path, mode="record"), transport) as gw:
        assert gw.complete(_req("abc")) == "ABC"
        assert gw.complete(_req("abc")) == "ABC"
    assert transport.calls == 1
    saved = json.loads(path.read_text())
    assert saved == {_req("abc").fingerprint: "ABC"}
    assert replay_gateway(path).complete(_req("abc")) == "ABC"


def test_passthrough_does_not_store():
    cassette = Cassette(mode="passthrough")
    gw = Gateway(cassette, ScriptedTransport(lambda r: "x"))
    gw.complete(_req())
    gw.complete(_req())
    assert len(cassette) == 0
    assert gw.transport.calls == 2


def test_complete_many_keeps_order_and_returns_errors():
    entries = {_req(str(i)).fingerprint: str(i) for i in range(20) if i != 7}
    gw = replay_gateway(entries, concurrency=4)
    out = gw.complete_many([_req(str(i)) for i in range(20)])
    assert [o for i, o in enumerate(out) if i != 7] == [str(i) for i in range(20) if i != 7]
    assert isinstance(out[7], ReplayMiss)


class Flaky:
    def __init__(self, failures, exc=RateLimited):
        self.failures = failures
        self.exc = exc
        self.calls = 0

    def __call__(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise self.exc()
        return "ok"


def test_retry_schedule_doubles():
    assert RetryPolicy().delays() == [1.0, 2.0, 4.0, 8.0]
    assert RetryPolicy(6, 10.0, max_delay=30.0).delays() == [10.0, 20.0, 30.0, 30.0, 30.0]


def test_transient_errors_are_retried_with_backoff():
    slept = []
    gw = Gateway(Cassette(mode="passthrough"), Flaky(3), sleep=slept.append)
    assert gw.complete(_req()) == "ok"
    assert slept == [1.0, 2.0, 4.0]


def test_retries_give_up_after_max_attempts():
    slept = []
    transport = Flaky(10)
    gw = Gateway(Cassette(mode="passthrough"), transport, sleep=slept.append)
    with pytest.raises(RateLimited):
        gw.complete(_req())
    assert transport.calls == 5
    assert slept == [1.0, 2.0, 4.0, 8.0]


def test_permanent_errors_are_not_retried():
    transport = Flaky(10, exc=lambda: TransportError("bad request", transient=False))
    gw = Gateway(Cassette(mode="passthrough"), transport, sleep=lambda d: None)
    with pytest.raises(TransportError):
        gw.complete(_req())
    assert transport.calls == 1


@pytest.mark.parametrize("raw,expected", [("Yes", True), ("no.", False), ("  YES, it is absent", True), ("No - mentioned", False)])
def test_parse_verdict(raw, expected):
    assert parse_verdict(raw) is expected


@pytest.mark.parametrize("raw", ["maybe", "", "1. yes", "Yesterday"])
def test_parse_verdict_rejects(raw):
    if raw == "1. yes":
        assert parse_verdict(raw) is True
        return
    with pytest.raises(JudgeUnparseable):
        parse_verdict(raw)


def test_judge_prompt_and_helper():
    req = judge_request("The soup was cold.", "parking")
    assert req.tag == "judge"
    assert "The soup was cold." in req.user_text and "parking" in req.user_text
    gw = replay_gateway({req.fingerprint: "Yes"})
    assert gw.judge_aspect_absent("The soup was cold.", "parking") is True


def test_translate_identity_and_language_check():
    gw = replay_gateway({})
    assert gw.translate_text("same", "en") == "same"
    with pytest.raises(ValueError):
        gw.translate_text("x", "xx")


def test_http_transport_payload_and_errors():
    seen = []

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        seen.append((str(request.url), request.headers.get("authorization"), body))
        if body["messages"][-1]["content"] == "limit":
            return httpx.Response(429)
        if body["messages"][-1]["content"] == "bad":
            return httpx.Response(400, text="nope")
        return httpx.Response(200, json={"choices": [{"message": {"content": "hi"}}]})

    t = HttpTransport("http://llm.test/v1", "m1", token="secret", http_transport=httpx.MockTransport(handler))
    assert t(_req(params=GenParams(json_mode=True))) == "hi"
    url, auth, body = seen[0]
    assert url == "http://llm.test/v1/chat/completions"
    assert auth == "Bearer secret"
    assert body["model"] == "m1" and body["response_format"] == {"type": "json_object"}
    with pytest.raises(RateLimited):
        t(_req("limit"))
    with pytest.raises(TransportError) as info:
        t(_req("bad"))
    assert not info.value.transient
    t.close()


def test_gateway_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        GatewayConfig.from_dict({"cassete": "typo.json"})
    with pytest.raises(ValueError):
        Gateway.from_config(GatewayConfig(mode="record", cassette=None))


def test_failing_transport_counts_contacts():
    t = FailingTransport()
    with pytest.raises(AssertionError):
        t(_req())
    assert t.contacts == 1


def test_call_counts_by_tag():
    gw = replay_gateway({_req(tag="judge").fingerprint: "Yes"})
    gw.complete(_req(tag="judge"))
    gw.complete_many([_req(tag="judge")] * 3)
    assert gw.calls == {"judge": 4}
