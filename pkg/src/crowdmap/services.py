"""Minimal JSON-over-HTTP client for the optional labeling and embedding services."""

from __future__ import annotations

import json
import os
import socket
import urllib.error
import urllib.request

from crowdmap.errors import ProtocolError, TransportError

DEFAULT_TIMEOUT = 10.0
TIMEOUT_ENV = "CROWDMAP_HTTP_TIMEOUT"


def default_timeout() -> float:
    raw = os.environ.get(TIMEOUT_ENV)
    if raw is None:
        return DEFAULT_TIMEOUT
    try:
        value = float(raw)
    except ValueError:
        return DEFAULT_TIMEOUT
    return value if value > 0 else DEFAULT_TIMEOUT


def post_json(endpoint: str, payload: dict, timeout: float | None = None) -> dict:
    """POST ``payload`` as JSON and return the decoded JSON object."""
    if timeout is None:
        timeout = default_timeout()
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        endpoint,
        data=body,
        headers={"Content-Type": "application/json", "Accept": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            raw = response.read()
    except urllib.error.HTTPError as exc:
        raise TransportError(f"{endpoint}: HTTP {exc.code}") from exc
    except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
        raise TransportError(f"{endpoint}: {exc}") from exc

    try:
        decoded = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"{endpoint}: response is not JSON") from exc
    if not isinstance(decoded, dict):
        raise ProtocolError(f"{endpoint}: response must be a JSON object")
    return decoded
