"""Live capture backend speaking the Chrome DevTools protocol.

Connects to an already-running browser started with
``--remote-debugging-port`` (and typically ``--headless=new``), opens a
fresh page target, masks the user agent, records network requests to the
GA endpoints (bodies for ``/batch``), scrolls through the page in random
steps, and dumps a shape snapshot of every JavaScript context before
returning the trace.

The transport is a deliberately small RFC 6455 client on the stdlib socket
(text frames, client masking, fragmentation and ping handling) — enough
for DevTools, which never needs extensions or binary frames.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import secrets
import socket
import struct
import threading
import time
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from urllib.parse import urlsplit

from .hits import DEFAULT_ENDPOINTS, EndpointConfig
from .session import GaRequest, PageTrace, SessionConfig, TraceStatus
from .trackers import GlobalSnapshot, snapshot_from_json

_WS_ACCEPT_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def accept_key_for(key: str) -> str:
    return base64.b64encode(hashlib.sha1((key + _WS_ACCEPT_GUID).encode()).digest()).decode()


OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


def encode_frame(payload: bytes, opcode: int = OP_TEXT, mask: bool = True) -> bytes:
    """One final (unfragmented) frame, client-masked by default."""
    header = bytearray([0x80 | opcode])
    length = len(payload)
    mask_bit = 0x80 if mask else 0x00
    if length < 126:
        header.append(mask_bit | length)
    elif length < 1 << 16:
        header.append(mask_bit | 126)
        header += struct.pack(">H", length)
    else:
        header.append(mask_bit | 127)
        header += struct.pack(">Q", length)
    if not mask:
        return bytes(header) + payload
    key = secrets.token_bytes(4)
    header += key
    masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(header) + masked


class FrameReader:
    """Incremental frame decoder over a read(n) callable; reassembles
    fragmented messages and surfaces control frames."""

    def __init__(self, read):
        self._read = read

    def _exactly(self, n: int) -> bytes:
        chunks = b""
        while len(chunks) < n:
            part = self._read(n - len(chunks))
            if not part:
                raise ConnectionError("websocket closed mid-frame")
            chunks += part
        return chunks

    def read_frame(self) -> tuple[int, bool, bytes]:
        first, second = self._exactly(2)
        fin = bool(first & 0x80)
        opcode = first & 0x0F
        masked = bool(second & 0x80)
        length = second & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", self._exactly(2))
        elif length == 127:
            (length,) = struct.unpack(">Q", self._exactly(8))
        key = self._exactly(4) if masked else None
        payload = self._exactly(length) if length else b""
        if key:
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return opcode, fin, payload

    def read_message(self) -> tuple[int, bytes]:
        """Next complete data or control message as (opcode, payload)."""
        opcode = None
        buffer = b""
        while True:
            frame_opcode, fin, payload = self.read_frame()
            if frame_opcode in (OP_CLOSE, OP_PING, OP_PONG):
                return frame_opcode, payload
            if frame_opcode != 0:
                opcode = frame_opcode
                buffer = payload
            else:
                buffer += payload
            if fin:
                return opcode or OP_TEXT, buffer


class WebSocketClient:
    def __init__(self, url: str, timeout: float = 30.0):
        parts = urlsplit(url)
        if parts.scheme != "ws":
            raise ValueError(f"only plain ws:// endpoints are supported: {url}")
        self._sock = socket.create_connection(
            (parts.hostname, parts.port or 80), timeout=timeout
        )
        self._reader = FrameReader(self._sock.recv)
        self._send_lock = threading.Lock()
        self._handshake(parts)

    def _handshake(self, parts) -> None:
        key = base64.b64encode(secrets.token_bytes(16)).decode()
        path = parts.path or "/"
        if parts.query:
            path += "?" + parts.query
        request = (
            f"GET {path} HTTP/1.1\r\n"
            f"Host: {parts.hostname}:{parts.port or 80}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n\r\n"
        )
        self._sock.sendall(request.encode())
        response = b""
        while b"\r\n\r\n" not in response:
            part = self._sock.recv(4096)
            if not part:
                raise ConnectionError("handshake failed: connection closed")
            response += part
        head, _, rest = response.partition(b"\r\n\r\n")
        status = head.split(b"\r\n", 1)[0]
        if b"101" not in status:
            raise ConnectionError(f"handshake rejected: {status.decode(errors='replace')}")
        if accept_key_for(key).encode() not in head:
            raise ConnectionError("handshake failed: bad accept key")
        if rest:
            buffered = [rest]

            def read(n, _buffered=buffered, _recv=self._sock.recv):
                if _buffered:
                    chunk = _buffered.pop(0)
                    if len(chunk) > n:
                        _buffered.insert(0, chunk[n:])
                        return chunk[:n]
                    return chunk
                return _recv(n)

            self._reader = FrameReader(read)

    def send_text(self, text: str) -> None:
        with self._send_lock:
            self._sock.sendall(encode_frame(text.encode()))

    def recv_text(self) -> str:
        while True:
            opcode, payload = self._reader.read_message()
            if opcode == OP_TEXT:
                return payload.decode()
            if opcode == OP_PING:
                with self._send_lock:
                    self._sock.sendall(encode_frame(payload, opcode=OP_PONG))
            elif opcode == OP_CLOSE:
                raise ConnectionError("websocket closed by peer")

    def close(self) -> None:
        try:
            with self._send_lock:
                self._sock.sendall(encode_frame(b"", opcode=OP_CLOSE))
        except OSError:
            pass
        self._sock.close()


# JS evaluated in every execution context. Builds the snapshot wire format:
# shallow shapes for all globals plus the tracker registries the verdict
# layer reads (analytics.js getAll(); queued ga.js commands).
SNAPSHOT_SCRIPT = r"""
(function () {
  var DEPTH = 3;
  function kindOf(v) {
    if (typeof v === "function") return "function";
    if (Array.isArray(v)) return "array";
    if (v !== null && typeof v === "object") return "object";
    return "primitive";
  }
  function dataValue(owner, name) {
    // Data properties only: invoking getters could run page code, and this
    // scan must stay read-only.
    var desc;
    try { desc = Object.getOwnPropertyDescriptor(owner, name); } catch (e) { return undefined; }
    if (!desc || !("value" in desc)) return undefined;
    return desc.value;
  }
  function shape(v, depth) {
    var kind = kindOf(v);
    if (kind === "primitive") {
      return (typeof v === "string" || typeof v === "number" || typeof v === "boolean" || v === null)
        ? v : {kind: "primitive", methods: [], attributes: {}};
    }
    var out = {kind: kind, methods: [], attributes: {}};
    var names = [];
    try { names = Object.getOwnPropertyNames(v); } catch (e) { return out; }
    for (var i = 0; i < names.length && i < 256; i++) {
      var name = names[i];
      var val = dataValue(v, name);
      if (val === undefined) continue;
      if (typeof val === "function") out.methods.push(name);
      else if (depth < DEPTH) out.attributes[name] = shape(val, depth + 1);
      else out.attributes[name] = null;
    }
    return out;
  }
  function registry(g) {
    var items = {};
    try {
      if (typeof g.getAll === "function") {
        var all = g.getAll();
        for (var i = 0; i < all.length; i++) {
          var t = all[i];
          items[String(i)] = {kind: "object", methods: [], attributes: {
            trackingId: t.get("trackingId"),
            name: t.get("name"),
            anonymizeIp: t.get("anonymizeIp") === undefined ? null : t.get("anonymizeIp"),
            cookieDomain: t.get("cookieDomain") === undefined ? null : t.get("cookieDomain")
          }};
        }
        return {kind: "array", methods: [], attributes: items};
      }
    } catch (e) {}
    return null;
  }
  function gaqAccounts() {
    var q = window._gaq;
    if (!q || typeof q.push !== "function" || !Array.isArray(q)) return null;
    var items = {}, n = 0, anonymized = false;
    for (var i = 0; i < q.length; i++) {
      var cmd = q[i];
      if (!Array.isArray(cmd) || !cmd.length) continue;
      if (String(cmd[0]) === "_gat._anonymizeIp") anonymized = true;
      if (String(cmd[0]).slice(-11) === "_setAccount") {
        items[String(n++)] = {kind: "object", methods: [], attributes: {
          accountId: String(cmd[1] || ""), anonymizeIp: anonymized
        }};
      }
    }
    return {kind: "array", methods: [], attributes: items};
  }
  var globals = {};
  var names = Object.getOwnPropertyNames(window);
  for (var i = 0; i < names.length; i++) {
    var name = names[i];
    var value = dataValue(window, name);
    if (value === undefined || value === window || value === document) continue;
    var s = shape(value, 1);
    if (s && s.kind && name === (window.GoogleAnalyticsObject || "ga")) {
      var reg = registry(value);
      if (reg) { s.attributes.trackers = reg; }
    }
    if (s && s.kind && name === "_gat") {
      var accounts = gaqAccounts();
      if (accounts) { s.attributes.accounts = accounts; }
    }
    globals[name] = s;
  }
  return JSON.stringify({context_id: "ctx", globals: globals});
})()
"""


@dataclass
class _PageState:
    requested_url: str
    final_url: str = ""
    redirect_chain: list[str] = None
    loaded: bool = False
    failed: bool = False
    ga_requests: list[GaRequest] = None


class CdpBackend:
    """SessionBackend over a browser's DevTools endpoint.

    ``endpoint`` is the debugging base URL, e.g. ``http://127.0.0.1:9222``
    (or the CHECKGA_CDP_URL environment variable).
    """

    def __init__(self, endpoint: str | None = None, endpoints: EndpointConfig = DEFAULT_ENDPOINTS):
        endpoint = endpoint or os.environ.get("CHECKGA_CDP_URL")
        if not endpoint:
            raise ValueError("no DevTools endpoint configured (CHECKGA_CDP_URL)")
        self.endpoint = endpoint.rstrip("/")
        self.ga_endpoints = endpoints
        self._next_id = 1

    # -- plumbing --------------------------------------------------------

    def _http_json(self, path: str, method: str = "GET") -> object:
        request = urllib.request.Request(self.endpoint + path, method=method)
        with urllib.request.urlopen(request, timeout=15) as response:
            return json.loads(response.read().decode())

    def _open_page_socket(self) -> tuple[WebSocketClient, str]:
        try:
            target = self._http_json("/json/new?about:blank", method="PUT")
        except Exception:
            target = self._http_json("/json/new?about:blank")  # pre-M111 browsers
        return WebSocketClient(target["webSocketDebuggerUrl"]), target["id"]

    def _call(self, ws: WebSocketClient, method: str, params: dict | None = None,
              pending: list[dict] | None = None) -> dict:
        call_id = self._next_id
        self._next_id += 1
        ws.send_text(json.dumps({"id": call_id, "method": method, "params": params or {}}))
        while True:
            message = json.loads(ws.recv_text())
            if message.get("id") == call_id:
                if "error" in message:
                    raise RuntimeError(f"{method}: {message['error']}")
                return message.get("result", {})
            if pending is not None and "method" in message:
                pending.append(message)

    # -- capture -----------------------------------------------------------

    def capture(self, url: str, config: SessionConfig) -> PageTrace:
        ws, target_id = self._open_page_socket()
        state = _PageState(requested_url=url, redirect_chain=[url], ga_requests=[])
        events: list[dict] = []
        contexts: list[int] = []
        try:
            self._call(ws, "Network.enable", pending=events)
            self._call(
                ws,
                "Network.setUserAgentOverride",
                {"userAgent": config.user_agent_override},
                pending=events,
            )
            self._call(ws, "Page.enable", pending=events)
            self._call(ws, "Runtime.enable", pending=events)

            self._call(ws, "Page.navigate", {"url": url}, pending=events)
            deadline = time.monotonic() + config.navigation_timeout_ms / 1000.0
            ws._sock.settimeout(1.0)
            while time.monotonic() < deadline and not state.loaded and not state.failed:
                try:
                    message = json.loads(ws.recv_text())
                except (socket.timeout, TimeoutError):
                    continue
                events.append(message)
                self._consume(message, state, contexts)
            for message in events:
                self._consume(message, state, contexts)
            events.clear()

            if state.failed:
                return self._finish(state, TraceStatus.UNREACHABLE, [])
            if not state.loaded:
                return self._finish(state, TraceStatus.TIMEOUT, [])

            snapshots = self._snapshots(ws, contexts, events, state)
            self._scroll(ws, config, events, state, contexts)
            snapshots += self._snapshots(ws, contexts, events, state, suffix="+dwell")
            return self._finish(state, TraceStatus.LOADED, snapshots)
        finally:
            try:
                self._http_json(f"/json/close/{target_id}")
            except Exception:
                pass
            ws.close()

    def _consume(self, message: dict, state: _PageState, contexts: list[int]) -> None:
        method = message.get("method")
        params = message.get("params", {})
        if method == "Network.requestWillBeSent":
            request = params.get("request", {})
            request_url = request.get("url", "")
            if params.get("type") == "Document" and params.get("redirectResponse"):
                if request_url and request_url not in state.redirect_chain:
                    state.redirect_chain.append(request_url)
            host = urlsplit(request_url).hostname or ""
            if host and self.ga_endpoints.matches_host(host):
                path = urlsplit(request_url).path
                if self.ga_endpoints.matches_path(path):
                    body = request.get("postData") if path == "/batch" else None
                    state.ga_requests.append(
                        GaRequest(
                            ts=datetime.now(timezone.utc), url=request_url, body=body
                        )
                    )
        elif method == "Page.loadEventFired":
            state.loaded = True
        elif method == "Page.frameNavigated":
            frame = params.get("frame", {})
            if not frame.get("parentId"):
                state.final_url = frame.get("url", state.final_url)
        elif method == "Runtime.executionContextCreated":
            contexts.append(params["context"]["id"])
        elif method == "Network.loadingFailed" and params.get("type") == "Document":
            state.failed = True

    def _snapshots(
        self,
        ws: WebSocketClient,
        contexts: list[int],
        events: list[dict],
        state: _PageState,
        suffix: str = "",
    ) -> list[GlobalSnapshot]:
        snapshots = []
        for context_id in list(contexts):
            try:
                result = self._call(
                    ws,
                    "Runtime.evaluate",
                    {
                        "expression": SNAPSHOT_SCRIPT,
                        "contextId": context_id,
                        "returnByValue": True,
                    },
                    pending=events,
                )
                value = result.get("result", {}).get("value")
                if not value:
                    continue
                data = json.loads(value)
                data["context_id"] = f"ctx{context_id}{suffix}"
                snapshots.append(snapshot_from_json(data))
            except (RuntimeError, ConnectionError):
                continue
        for message in events:
            self._consume(message, state, contexts)
        events.clear()
        return snapshots

    def _scroll(
        self,
        ws: WebSocketClient,
        config: SessionConfig,
        events: list[dict],
        state: _PageState,
        contexts: list[int],
    ) -> None:
        plan = config.scroll
        seed = config.scroll_seed
        if seed is None:
            seed = int(datetime.now(timezone.utc).timestamp() * 1000)
        rng = random.Random(seed)
        elapsed = 0.0
        while elapsed < plan.dwell_ms:
            interval = rng.uniform(plan.min_interval_ms, plan.max_interval_ms)
            amount = rng.randint(plan.min_amount_px, plan.max_amount_px)
            try:
                self._call(
                    ws,
                    "Runtime.evaluate",
                    {"expression": f"window.scrollBy(0, {amount})"},
                    pending=events,
                )
            except (RuntimeError, ConnectionError):
                return
            time.sleep(min(interval, plan.dwell_ms - elapsed) / 1000.0)
            elapsed += interval
        for message in events:
            self._consume(message, state, contexts)
        events.clear()

    def _finish(
        self, state: _PageState, status: TraceStatus, snapshots: list[GlobalSnapshot]
    ) -> PageTrace:
        final = state.final_url if status is TraceStatus.LOADED else ""
        if status is TraceStatus.LOADED and not final:
            final = state.requested_url
        return PageTrace(
            requested_url=state.requested_url,
            final_url=final,
            redirect_chain=tuple(state.redirect_chain),
            status=status,
            ga_requests=tuple(state.ga_requests),
            snapshots=tuple(snapshots),
            captured_at=datetime.now(timezone.utc),
        )
