import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from pisearch.errors import TransportError
from pisearch.llm import LlmClient, TokenUsage


class _ChatHandler(BaseHTTPRequestHandler):
    """Scriptable chat-completions endpoint."""

    script = []  # list of (status, payload) consumed per request
    seen = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _ChatHandler.seen.append(json.loads(self.rfile.read(length)))
        status, payload = _ChatHandler.script.pop(0)
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture
def chat_server():
    server = HTTPServer(("127.0.0.1", 0), _ChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _ChatHandler.script = []
    _ChatHandler.seen = []
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
    server.shutdown()


def ok_payload(content=None, tool_calls=None, usage=None, model="test-model"):
    message = {"role": "assistant", "content": content}
    if tool_calls:
        message["tool_calls"] = tool_calls
    payload = {"choices": [{"message": message}], "model": model}
    if usage is not None:
        payload["usage"] = usage
    return payload


def test_text_reply_with_usage(chat_server):
    _ChatHandler.script = [
        (
            200,
            ok_payload(
                content="hello",
                usage={
                    "prompt_tokens": 120,
                    "completion_tokens": 7,
                    "prompt_tokens_details": {"cached_tokens": 100},
                },
            ),
        )
    ]
    client = LlmClient(endpoint=chat_server, model="test-model")
    response = client.chat([{"role": "user", "content": "hi"}])
    assert response.text == "hello"
    assert response.usage == TokenUsage(
        model="test-model", input_tokens=120, output_tokens=7, cached_input_tokens=100
    )


def test_tool_call_arguments_decoded(chat_server):
    _ChatHandler.script = [
        (
            200,
            ok_payload(
                tool_calls=[
                    {
                        "id": "c9",
                        "type": "function",
                        "function": {
                            "name": "search",
                            "arguments": json.dumps({"reason": "r", "query": "q"}),
                        },
                    }
                ]
            ),
        )
    ]
    client = LlmClient(endpoint=chat_server, model="m")
    response = client.chat([{"role": "user", "content": "go"}], tools=[{"type": "function"}])
    assert response.tool_calls == [
        {"id": "c9", "name": "search", "arguments": {"reason": "r", "query": "q"}}
    ]
    assert _ChatHandler.seen[0]["tools"] == [{"type": "function"}]


def test_usage_absent_is_none(chat_server):
    _ChatHandler.script = [(200, ok_payload(content="x"))]
    client = LlmClient(endpoint=chat_server, model="m")
    assert client.chat([{"role": "user", "content": "hi"}]).usage is None


def test_transient_500_retried_once_then_ok(chat_server):
    _ChatHandler.script = [(500, {"error": "boom"}), (200, ok_payload(content="recovered"))]
    client = LlmClient(endpoint=chat_server, model="m")
    assert client.chat([{"role": "user", "content": "hi"}]).text == "recovered"
    assert len(_ChatHandler.seen) == 2


def test_persistent_500_raises_transport_error(chat_server):
    _ChatHandler.script = [(500, {"error": "boom"}), (500, {"error": "boom"})]
    client = LlmClient(endpoint=chat_server, model="m")
    with pytest.raises(TransportError):
        client.chat([{"role": "user", "content": "hi"}])


def test_4xx_not_retried(chat_server):
    _ChatHandler.script = [(400, {"error": "bad request"})]
    client = LlmClient(endpoint=chat_server, model="m")
    with pytest.raises(TransportError, match="400"):
        client.chat([{"role": "user", "content": "hi"}])
    assert len(_ChatHandler.seen) == 1


def test_api_key_header_sent(chat_server, monkeypatch):
    monkeypatch.setenv("TEST_KEY_ENV", "sekrit")
    _ChatHandler.script = [(200, ok_payload(content="x"))]

    captured = {}
    orig = _ChatHandler.do_POST

    def spy(self):
        captured["auth"] = self.headers.get("Authorization")
        orig(self)

    _ChatHandler.do_POST = spy
    try:
        client = LlmClient(endpoint=chat_server, model="m", api_key_env="TEST_KEY_ENV")
        client.chat([{"role": "user", "content": "hi"}])
    finally:
        _ChatHandler.do_POST = orig
    assert captured["auth"] == "Bearer sekrit"


def test_connection_refused_is_transport_error():
    client = LlmClient(endpoint="http://127.0.0.1:9/chat", model="m", timeout=0.2)
    with pytest.raises(TransportError):
        client.chat([{"role": "user", "content": "hi"}])
