"""Transport: in-process loopback and real HTTP behind one interface.

Hosts (agents, registries) implement ``handle_request(method, path, query,
body, sender_id)`` returning ``(status, content_type, text)``. A Network
routes client calls either to registered in-process hosts (``mem://name``
URLs, the deterministic default for simulations) or over real HTTP(S) via
requests, with bounded retries on transport errors.

Deployments use HTTPS; plain HTTP and the mem scheme exist for tests and
simulation.
"""

from __future__ import annotations

import time
from typing import Protocol
from urllib.parse import parse_qsl, urlsplit

SENDER_HEADER = "X-Sender-Id"


class TransportError(Exception):
    """The peer could not be reached or answered with a transport error."""


class NotFound(TransportError):
    """The peer answered 404."""


class WireHost(Protocol):
    def handle_request(self, method: str, path: str, query: dict[str, str],
                       body: str, sender_id: str | None) -> tuple[int, str, str]: ...


class Network:
    """Routes requests by URL scheme: mem:// to in-process hosts, http(s)://
    to the wire. One instance is shared by all agents of a simulation."""

    def __init__(self, attempts: int = 3, backoff: float = 0.1, timeout: float = 30.0):
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._hosts: dict[str, WireHost] = {}

    def register(self, name: str, host: WireHost) -> None:
        self._hosts[name] = host

    def host(self, name: str) -> WireHost | None:
        return self._hosts.get(name)

    # -- raw request --------------------------------------------------

    def request(self, method: str, url: str, body: str = "",
                sender_id: str | None = None) -> tuple[int, str]:
        parts = urlsplit(url)
        if parts.scheme == "mem":
            return self._request_local(method, parts, body, sender_id)
        if parts.scheme in ("http", "https"):
            return self._request_http(method, url, body, sender_id)
        raise TransportError(f"unsupported URL scheme: {url!r}")

    def _request_local(self, method, parts, body, sender_id) -> tuple[int, str]:
        host = self._hosts.get(parts.netloc)
        if host is None:
            raise TransportError(f"no in-process host named {parts.netloc!r}")
        query = dict(parse_qsl(parts.query))
        status, _ctype, text = host.handle_request(method, parts.path or "/", query, body, sender_id)
        return status, text

    def _request_http(self, method, url, body, sender_id) -> tuple[int, str]:
        import requests

        headers = {"Content-Type": "application/json"}
        if sender_id:
            headers[SENDER_HEADER] = sender_id
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = requests.request(method, url, data=body.encode("utf-8"),
                                        headers=headers, timeout=self.timeout)
                return resp.status_code, resp.text
            except requests.RequestException as exc:
                last_error = exc
                if attempt + 1 < self.attempts:
                    time.sleep(self.backoff)
        raise TransportError(f"request to {url} failed after {self.attempts} attempts: {last_error}")

    # -- conveniences ---------------------------------------------------

    def fetch_text(self, url: str) -> str:
        """GET; returns the body on 200, raises NotFound/TransportError otherwise."""
        status, text = self.request("GET", url)
        if status == 404:
            raise NotFound(url)
        if status != 200:
            raise TransportError(f"GET {url} -> {status}: {text[:200]}")
        return text

    def post_text(self, url: str, body: str) -> str:
        status, text = self.request("POST", url, body)
        if status != 200:
            raise TransportError(f"POST {url} -> {status}: {text[:200]}")
        return text

    def post_envelope(self, base_url: str, request_json: str,
                      sender_id: str | None = None) -> str:
        """POST a request envelope to an agent's root endpoint."""
        status, text = self.request("POST", base_url.rstrip("/") + "/", request_json, sender_id)
        if status != 200:
            raise TransportError(f"POST {base_url} -> {status}: {text[:200]}")
        return text

    def fetch_wellknown(self, base_url: str) -> str:
        return self.fetch_text(base_url.rstrip("/") + "/.wellknown")
